#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "apsusct/errors.hpp"
#include "apsusct/nn/ops.hpp"
#include "apsusct/nn/param_store.hpp"
#include "apsusct/nn/tape.hpp"
#include "apsusct/random.hpp"

namespace apsusct::nn {

enum class LayerKind { conv, conv_transpose, leaky_relu, instance_norm, se_block, linear, sigmoid, tanh, global_avg_pool };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::conv_transpose: return "conv_transpose";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::instance_norm: return "instance_norm";
    case LayerKind::se_block: return "se_block";
    case LayerKind::linear: return "linear";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::tanh: return "tanh";
    case LayerKind::global_avg_pool: return "global_avg_pool";
  }
  return "?";
}

inline constexpr double default_negative_slope = 0.2;

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  ConvGeometry geometry{};
  double negative_slope = default_negative_slope;
  std::size_t reduction = 4;
  bool bias = true;

  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride = 1,
                        std::size_t pad = 0) {
    return {LayerKind::conv, in, out, k, k, ConvGeometry::uniform(stride, pad)};
  }
  static LayerSpec conv_transpose(std::size_t in, std::size_t out, std::size_t k, std::size_t stride = 1,
                                  std::size_t pad = 0) {
    return {LayerKind::conv_transpose, in, out, k, k, ConvGeometry::uniform(stride, pad)};
  }
  static LayerSpec pointwise(LayerKind kind, std::size_t channels) { return {kind, channels, channels, 1, 1}; }
  static LayerSpec se(std::size_t channels, std::size_t reduction) {
    LayerSpec s = pointwise(LayerKind::se_block, channels);
    s.reduction = reduction;
    return s;
  }
  static LayerSpec linear(std::size_t in, std::size_t out) { return {LayerKind::linear, in, out, 1, 1}; }

  bool operator==(const LayerSpec&) const = default;
};

inline void validate(const LayerSpec& s) {
  const std::string what = std::string(to_string(s.kind)) + " layer: ";
  if (s.in_channels == 0 || s.out_channels == 0) throw ConfigError(what + "channel counts must be positive");
  if (s.kind == LayerKind::conv || s.kind == LayerKind::conv_transpose) {
    const auto& g = s.geometry;
    if (g.stride_h == 0 || g.stride_w == 0) throw ConfigError(what + "stride must be >= 1");
    if (s.kernel_h == 0 || s.kernel_w == 0) throw ConfigError(what + "kernel must be non-empty");
    // Same-size stages need a centred (odd) kernel; strided stages need kernel >= stride so no
    // input sample is skipped.
    auto check_axis = [&](std::size_t k, std::size_t stride, const char* axis) {
      if (stride == 1 && k % 2 == 0) throw ConfigError(what + "stride-1 kernel must be odd along " + axis);
      if (k < stride) throw ConfigError(what + "kernel smaller than stride along " + axis);
    };
    check_axis(s.kernel_h, g.stride_h, "height");
    check_axis(s.kernel_w, g.stride_w, "width");
    if (g.out_pad_h >= g.stride_h || g.out_pad_w >= g.stride_w) {
      throw ConfigError(what + "output padding must be smaller than stride");
    }
  }
  if (s.kind == LayerKind::se_block) {
    if (s.reduction == 0 || s.in_channels % s.reduction != 0) {
      throw ConfigError(what + "reduction " + std::to_string(s.reduction) + " does not divide " +
                        std::to_string(s.in_channels) + " channels");
    }
  }
  if (s.kind == LayerKind::leaky_relu && !(s.negative_slope >= 0.0 && s.negative_slope < 1.0)) {
    throw ConfigError(what + "negative slope must be in [0, 1)");
  }
}

namespace detail {

template <class T>
Tensor4<T> uniform_init(Shape4 shape, double bound, Rng& rng) {
  Tensor4<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(uniform(rng, -bound, bound));
  return t;
}

}  // namespace detail

/// Creates the parameters of one layer under `prefix`. Conv weights are He-uniform for a
/// leaky ReLU of slope 0.2 (a transposed conv counts kernel taps per output, kernel / stride);
/// biases and dense weights are uniform in +-sqrt(1/fan_in). `zero` initializes everything to 0.
template <class T>
void init_layer(const LayerSpec& s, const std::string& prefix, ParamStore<T>& store, Rng& rng, bool zero = false) {
  validate(s);
  auto make = [&](Shape4 shape, double fan_in) {
    return zero ? Tensor4<T>(shape) : detail::uniform_init<T>(shape, std::sqrt(1.0 / fan_in), rng);
  };
  auto make_conv = [&](Shape4 shape, double fan_in) {
    const double bound = std::sqrt(6.0 / ((1.0 + 0.2 * 0.2) * fan_in));
    return zero ? Tensor4<T>(shape) : detail::uniform_init<T>(shape, bound, rng);
  };
  switch (s.kind) {
    case LayerKind::conv: {
      const double fan_in = static_cast<double>(s.in_channels * s.kernel_h * s.kernel_w);
      store.add(prefix + "/weight", make_conv({s.out_channels, s.in_channels, s.kernel_h, s.kernel_w}, fan_in));
      if (s.bias) store.add(prefix + "/bias", make({s.out_channels, 1, 1, 1}, fan_in));
      break;
    }
    case LayerKind::conv_transpose: {
      const double fan_in = static_cast<double>(s.in_channels * s.kernel_h * s.kernel_w);
      const double taps = fan_in / static_cast<double>(s.geometry.stride_h * s.geometry.stride_w);
      store.add(prefix + "/weight", make_conv({s.in_channels, s.out_channels, s.kernel_h, s.kernel_w}, taps));
      if (s.bias) store.add(prefix + "/bias", make({s.out_channels, 1, 1, 1}, fan_in));
      break;
    }
    case LayerKind::instance_norm:
      store.add(prefix + "/gamma", Tensor4<T>({s.in_channels, 1, 1, 1}, T(1)));
      store.add(prefix + "/beta", Tensor4<T>({s.in_channels, 1, 1, 1}, T(0)));
      break;
    case LayerKind::linear: {
      const double fan_in = static_cast<double>(s.in_channels);
      store.add(prefix + "/weight", make({s.out_channels, s.in_channels, 1, 1}, fan_in));
      if (s.bias) store.add(prefix + "/bias", make({s.out_channels, 1, 1, 1}, fan_in));
      break;
    }
    case LayerKind::se_block: {
      const std::size_t c = s.in_channels;
      const std::size_t hidden = c / s.reduction;
      store.add(prefix + "/fc1/weight", make({hidden, c, 1, 1}, static_cast<double>(c)));
      store.add(prefix + "/fc1/bias", make({hidden, 1, 1, 1}, static_cast<double>(c)));
      store.add(prefix + "/fc2/weight", make({c, hidden, 1, 1}, static_cast<double>(hidden)));
      store.add(prefix + "/fc2/bias", make({c, 1, 1, 1}, static_cast<double>(hidden)));
      break;
    }
    case LayerKind::leaky_relu:
    case LayerKind::sigmoid:
    case LayerKind::tanh:
    case LayerKind::global_avg_pool:
      break;
  }
}

/// Squeeze-and-excitation gate: pooled channel statistics -> bottleneck MLP -> sigmoid -> rescale.
template <class T>
Var se_block(Tape<T>& t, Var x, const std::string& prefix, double slope = default_negative_slope) {
  Var z = global_avg_pool(t, x, prefix + "/squeeze");
  z = linear(t, z, t.param(prefix + "/fc1/weight"), t.param(prefix + "/fc1/bias"), prefix + "/fc1");
  z = leaky_relu(t, z, slope, prefix + "/act");
  z = linear(t, z, t.param(prefix + "/fc2/weight"), t.param(prefix + "/fc2/bias"), prefix + "/fc2");
  z = sigmoid(t, z, prefix + "/gate");
  return channel_scale(t, x, z, prefix + "/scale");
}

template <class T>
Var apply_layer(const LayerSpec& s, const std::string& prefix, Tape<T>& t, Var x) {
  auto bias = [&]() { return s.bias ? t.param(prefix + "/bias") : Var{}; };
  switch (s.kind) {
    case LayerKind::conv:
      return conv2d(t, x, t.param(prefix + "/weight"), bias(), s.geometry, prefix);
    case LayerKind::conv_transpose:
      return conv_transpose2d(t, x, t.param(prefix + "/weight"), bias(), s.geometry, prefix);
    case LayerKind::leaky_relu:
      return leaky_relu(t, x, s.negative_slope, prefix);
    case LayerKind::instance_norm:
      return instance_norm(t, x, t.param(prefix + "/gamma"), t.param(prefix + "/beta"), 1e-5, prefix);
    case LayerKind::se_block:
      return se_block(t, x, prefix, s.negative_slope);
    case LayerKind::linear:
      return linear(t, x, t.param(prefix + "/weight"), bias(), prefix);
    case LayerKind::sigmoid:
      return sigmoid(t, x, prefix);
    case LayerKind::tanh:
      return tanh(t, x, prefix);
    case LayerKind::global_avg_pool:
      return global_avg_pool(t, x, prefix);
  }
  throw ConfigError("unknown layer kind");
}

/// Parameters of one SE block for the stand-alone se_block() function.
template <class T>
struct SeParams {
  Tensor4<T> fc1_weight;  // (C/r, C, 1, 1)
  Tensor4<T> fc1_bias;    // (C/r, 1, 1, 1)
  Tensor4<T> fc2_weight;  // (C, C/r, 1, 1)
  Tensor4<T> fc2_bias;    // (C, 1, 1, 1)
};

template <class T>
Tensor4<T> se_block(const Tensor4<T>& input, const SeParams<T>& params, std::size_t reduction) {
  const std::size_t c = input.shape().c;
  validate(LayerSpec::se(c, reduction));
  const std::size_t hidden = c / reduction;
  if (!(params.fc1_weight.shape() == Shape4{hidden, c, 1, 1}) ||
      !(params.fc2_weight.shape() == Shape4{c, hidden, 1, 1}) || params.fc1_bias.size() != hidden ||
      params.fc2_bias.size() != c) {
    throw ConfigError("se_block: parameter shapes do not match " + std::to_string(c) + " channels / reduction " +
                      std::to_string(reduction));
  }
  ParamStore<T> store;
  store.add("se/fc1/weight", params.fc1_weight);
  store.add("se/fc1/bias", params.fc1_bias);
  store.add("se/fc2/weight", params.fc2_weight);
  store.add("se/fc2/bias", params.fc2_bias);
  Tape<T> tape(&store);
  Var y = se_block(tape, tape.constant(input), "se");
  return tape.value(y);
}

}  // namespace apsusct::nn
