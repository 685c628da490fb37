#pragma once

// Waveform to speed-of-sound reconstruction: learnable source encoding feeding an
// encoder-decoder (InversionNet style) with optional squeeze-and-excitation in the decoder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "apsusct/errors.hpp"
#include "apsusct/nn/layers.hpp"
#include "apsusct/nn/ops.hpp"
#include "apsusct/nn/param_store.hpp"
#include "apsusct/nn/tape.hpp"
#include "apsusct/phantom.hpp"
#include "apsusct/random.hpp"
#include "apsusct/wave_sim.hpp"

namespace apsusct {

struct SourceEncodingSpec {
  std::size_t input_sources = 0;
  std::size_t encoded_channels = 4;
  bool random_mask = true;

  void validate() const {
    if (encoded_channels == 0 || encoded_channels > input_sources) {
      throw ConfigError("source encoding needs 1 <= encoded channels <= sources, got " +
                        std::to_string(encoded_channels) + " of " + std::to_string(input_sources));
    }
  }
  bool operator==(const SourceEncodingSpec&) const = default;
};

/// Independent +-1 signs, one per source.
inline std::vector<double> rademacher_mask(std::size_t count, Rng& rng) {
  std::vector<double> m(count);
  for (auto& v : m) v = uniform_int(rng, 0, 1) == 0 ? -1.0 : 1.0;
  return m;
}

/// out[e] = sum_i weights[e][i] * mask[i] * cube[i]; weights is row-major (E x I).
inline Tensor4<double> encode_sources(const WaveformCube& cube, const std::vector<double>& weights,
                                      std::size_t encoded, const std::vector<double>& mask = {}) {
  const std::size_t I = cube.sources;
  if (encoded == 0 || weights.size() != encoded * I) {
    throw DataError("encode_sources: weights must be " + std::to_string(encoded) + " x " + std::to_string(I));
  }
  if (!mask.empty() && mask.size() != I) throw DataError("encode_sources: mask length differs from source count");
  Tensor4<double> out({1, encoded, cube.receivers, cube.time});
  const std::size_t plane = cube.receivers * cube.time;
  for (std::size_t e = 0; e < encoded; ++e) {
    double* o = out.plane(0, e);
    for (std::size_t i = 0; i < I; ++i) {
      const double w = weights[e * I + i] * (mask.empty() ? 1.0 : mask[i]);
      const double* src = cube.values.data() + i * plane;
      for (std::size_t k = 0; k < plane; ++k) o[k] += w * src[k];
    }
  }
  return out;
}

/// Encoder: strided conv stages down to 1x1 (the longer axis is halved first, both when equal),
/// instance-normalized while the output plane holds at least 4 values. Decoder: conv_transpose
/// stages from 1x1 up to n x n, each normalized and optionally followed by an SE block. Convs
/// feeding a norm carry no bias.
struct InversionNetSpec {
  std::size_t receivers = 0;
  std::size_t time = 0;
  std::size_t map_n = 0;
  std::size_t in_channels = 4;
  std::size_t base_channels = 8;
  bool se_enabled = true;
  std::size_t se_reduction = 4;
  double c_min = 1400.0;
  double c_max = 1600.0;
  std::vector<nn::LayerSpec> encoder;
  std::vector<bool> encoder_norm;
  std::vector<nn::LayerSpec> decoder;
  nn::LayerSpec output;

  std::size_t latent_channels() const { return base_channels * 8; }

  static InversionNetSpec make(std::size_t receivers, std::size_t time, std::size_t map_n, std::size_t in_channels,
                               std::size_t base_channels, bool se_enabled, double c_min, double c_max,
                               std::size_t se_reduction = 4) {
    if (receivers == 0 || time == 0 || map_n == 0 || in_channels == 0 || base_channels == 0) {
      throw ConfigError("inversion net needs non-empty dims");
    }
    InversionNetSpec s;
    s.receivers = receivers;
    s.time = time;
    s.map_n = map_n;
    s.in_channels = in_channels;
    s.base_channels = base_channels;
    s.se_enabled = se_enabled;
    s.se_reduction = se_reduction;
    s.c_min = c_min;
    s.c_max = c_max;

    auto axis = [](std::size_t extent, std::size_t& k, std::size_t& stride, std::size_t& pad) {
      stride = 2;
      pad = 1;
      k = extent % 2 == 0 ? 4 : 3;
    };
    std::size_t h = receivers;
    std::size_t w = time;
    std::size_t c = in_channels;
    for (std::size_t i = 0; h > 1 || w > 1; ++i) {
      const std::size_t out_c = std::min(base_channels << ((i + 1) / 2), s.latent_channels());
      nn::LayerSpec l = nn::LayerSpec::conv(c, out_c, 3, 1, 1);
      const bool halve_w = w > 1 && w >= h;
      const bool halve_h = h > 1 && h >= w;
      if (halve_w) axis(w, l.kernel_w, l.geometry.stride_w, l.geometry.pad_w);
      if (halve_h) axis(h, l.kernel_h, l.geometry.stride_h, l.geometry.pad_h);
      if (halve_w) w = (w + 1) / 2;
      if (halve_h) h = (h + 1) / 2;
      l.bias = h * w < 4;
      s.encoder.push_back(l);
      s.encoder_norm.push_back(!l.bias);
      c = out_c;
    }
    if (s.encoder.empty() || c != s.latent_channels()) {
      // Too few stages to reach the latent width: a final stride-1 1x1 stage does it.
      s.encoder.push_back(nn::LayerSpec::conv(c, s.latent_channels(), 1));
      s.encoder_norm.push_back(false);
      c = s.latent_channels();
    }

    std::size_t odd = map_n;
    std::size_t doublings = 0;
    while (odd % 2 == 0) {
      odd /= 2;
      ++doublings;
    }
    std::size_t j = 0;
    auto next_c = [&]() { return std::max(base_channels, s.latent_channels() >> (j + 1)); };
    auto add_stage = [&](std::size_t k, std::size_t stride, std::size_t pad) {
      nn::LayerSpec l = nn::LayerSpec::conv_transpose(c, next_c(), k, stride, pad);
      l.bias = false;
      s.decoder.push_back(l);
      c = next_c();
      ++j;
    };
    if (odd > 1) add_stage(odd, 1, 0);
    for (std::size_t d = 0; d < doublings; ++d) add_stage(4, 2, 1);
    s.output = nn::LayerSpec::conv(c, 1, 1);
    s.validate();
    return s;
  }

  /// Encoder output shape for a batch of one.
  Shape4 encoded_shape() const {
    Shape4 cur{1, in_channels, receivers, time};
    for (const auto& l : encoder) {
      cur = nn::conv2d_output_shape(cur, {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w}, l.geometry);
    }
    return cur;
  }

  void validate() const {
    if (!(c_max > c_min)) throw ConfigError("inversion net speed range must satisfy c_min < c_max");
    if (encoder.empty() || encoder_norm.size() != encoder.size()) throw ConfigError("inversion net needs encoder stages");
    for (const auto& l : encoder) nn::validate(l);
    for (const auto& l : decoder) nn::validate(l);
    nn::validate(output);
    const Shape4 latent = encoded_shape();
    if (latent.h != 1 || latent.w != 1) throw ConfigError("inversion net encoder ends at " + latent.str() + ", not 1x1");
    Shape4 cur = latent;
    for (const auto& l : decoder) {
      if (l.kind != nn::LayerKind::conv_transpose) throw ConfigError("inversion net decoder stages must be conv_transpose");
      if (se_enabled) nn::validate(nn::LayerSpec::se(l.out_channels, se_reduction));
      cur = nn::conv_transpose2d_output_shape(cur, {l.in_channels, l.out_channels, l.kernel_h, l.kernel_w},
                                              l.geometry);
    }
    if (cur.h != map_n || cur.w != map_n) {
      throw ConfigError("inversion net decoder ends at " + cur.str() + ", expected " + std::to_string(map_n) + "x" +
                        std::to_string(map_n));
    }
    if (output.in_channels != cur.c || output.out_channels != 1) {
      throw ConfigError("inversion net output must map to one channel");
    }
  }

  bool operator==(const InversionNetSpec&) const = default;
};

template <class T>
void init_inversion_net(const SourceEncodingSpec& enc, const InversionNetSpec& net, nn::ParamStore<T>& store,
                        Rng& rng) {
  enc.validate();
  net.validate();
  if (enc.encoded_channels != net.in_channels) throw ConfigError("encoded channels differ from network input");
  nn::LayerSpec mix = nn::LayerSpec::conv(enc.input_sources, enc.encoded_channels, 1);
  mix.bias = false;
  nn::init_layer(mix, "encode", store, rng);
  for (std::size_t i = 0; i < net.encoder.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    nn::init_layer(net.encoder[i], p, store, rng);
    if (net.encoder_norm[i]) {
      nn::init_layer(nn::LayerSpec::pointwise(nn::LayerKind::instance_norm, net.encoder[i].out_channels), p + "/norm",
                     store, rng);
    }
  }
  for (std::size_t j = 0; j < net.decoder.size(); ++j) {
    const std::string p = "dec" + std::to_string(j);
    nn::init_layer(net.decoder[j], p, store, rng);
    nn::init_layer(nn::LayerSpec::pointwise(nn::LayerKind::instance_norm, net.decoder[j].out_channels), p + "/norm",
                   store, rng);
    if (net.se_enabled) nn::init_layer(nn::LayerSpec::se(net.decoder[j].out_channels, net.se_reduction), p + "/se", store, rng);
  }
  nn::init_layer(net.output, "out", store, rng);
}

/// (B, I, R, K) waveforms -> (B, 1, n, n) in normalized units [-1, 1]. `mask` multiplies the
/// source columns of the encoding weights; empty means all ones.
template <class T>
nn::Var inversion_forward(const SourceEncodingSpec& enc, const InversionNetSpec& net, nn::Tape<T>& t, nn::Var x,
                          const std::vector<double>& mask = {}) {
  const auto& in = t.value(x).shape();
  if (in.c != enc.input_sources || in.h != net.receivers || in.w != net.time) {
    throw DataError("inversion net expects (N, " + std::to_string(enc.input_sources) + ", " +
                    std::to_string(net.receivers) + ", " + std::to_string(net.time) + "), got " + in.str());
  }
  nn::Var w = t.param("encode/weight");
  if (!mask.empty()) w = nn::mask_input_channels(t, w, std::vector<T>(mask.begin(), mask.end()), "encode/mask");
  nn::Var h = nn::conv2d(t, x, w, nn::Var{}, nn::ConvGeometry{}, "encode");
  for (std::size_t i = 0; i < net.encoder.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    h = nn::apply_layer(net.encoder[i], p, t, h);
    if (net.encoder_norm[i]) {
      h = nn::apply_layer(nn::LayerSpec::pointwise(nn::LayerKind::instance_norm, net.encoder[i].out_channels),
                          p + "/norm", t, h);
    }
    h = nn::leaky_relu(t, h, nn::default_negative_slope, p + "/act");
  }
  for (std::size_t j = 0; j < net.decoder.size(); ++j) {
    const std::string p = "dec" + std::to_string(j);
    h = nn::apply_layer(net.decoder[j], p, t, h);
    h = nn::apply_layer(nn::LayerSpec::pointwise(nn::LayerKind::instance_norm, net.decoder[j].out_channels),
                        p + "/norm", t, h);
    h = nn::leaky_relu(t, h, nn::default_negative_slope, p + "/act");
    if (net.se_enabled) h = nn::apply_layer(nn::LayerSpec::se(net.decoder[j].out_channels, net.se_reduction), p + "/se", t, h);
  }
  h = nn::apply_layer(net.output, "out", t, h);
  return nn::tanh(t, h, "out/tanh");
}

inline double normalize_speed(double c, double c_min, double c_max) { return 2.0 * (c - c_min) / (c_max - c_min) - 1.0; }
inline double denormalize_speed(double y, double c_min, double c_max) { return c_min + 0.5 * (y + 1.0) * (c_max - c_min); }

struct FwiTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 4;
  nn::AdamConfig adam{};
  std::uint64_t seed = 0;
  std::size_t base_channels = 8;
  std::size_t encoded_channels = 4;
  bool random_mask = true;
  bool se_enabled = true;
  std::size_t se_reduction = 4;
  bool verbose = false;
};

template <class T>
struct FwiModel {
  SourceEncodingSpec encoding;
  InversionNetSpec net;
  double norm_scale = 1.0;
  nn::ParamStore<T> params;
  std::vector<double> loss_history;
};

namespace detail {

template <class T>
void copy_cube(const WaveformCube& c, double scale, Tensor4<T>& batch, std::size_t slot) {
  T* dst = batch.plane(slot, 0);
  for (std::size_t i = 0; i < c.values.size(); ++i) dst[i] = static_cast<T>(c.values[i] / scale);
}

}  // namespace detail

/// Adam on the mean squared error between the tanh output and labels mapped to [-1, 1].
template <class T>
FwiModel<T> train_fwi(const std::vector<WaveformCube>& cubes, const std::vector<SosMap>& labels,
                      const FwiTrainConfig& cfg, double c_min, double c_max) {
  if (cubes.empty() || cubes.size() != labels.size()) {
    throw DataError("train_fwi needs equally many cubes and labels (" + std::to_string(cubes.size()) + " vs " +
                    std::to_string(labels.size()) + ")");
  }
  if (cfg.batch_size == 0) throw ConfigError("train_fwi: batch size must be positive");
  const WaveformCube& first = cubes[0];
  const std::size_t n = labels[0].n;
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    if (!cubes[i].same_dims(first)) {
      throw DataError("training cube " + std::to_string(i) + " has dims " + cubes[i].dims() + ", expected " + first.dims());
    }
    if (labels[i].n != n) throw DataError("training label " + std::to_string(i) + " has a different map size");
  }
  FwiModel<T> model;
  model.encoding = {first.sources, cfg.encoded_channels, cfg.random_mask};
  model.net = InversionNetSpec::make(first.receivers, first.time, n, cfg.encoded_channels, cfg.base_channels,
                                     cfg.se_enabled, c_min, c_max, cfg.se_reduction);
  double peak = 0.0;
  for (const auto& c : cubes)
    for (double v : c.values) peak = std::max(peak, std::abs(v));
  model.norm_scale = peak > 0.0 ? peak : 1.0;
  Rng init_rng = derive_rng(cfg.seed, 11);
  init_inversion_net(model.encoding, model.net, model.params, init_rng);

  Rng order_rng = derive_rng(cfg.seed, 12);
  Rng mask_rng = derive_rng(cfg.seed, 13);
  std::vector<std::size_t> order(cubes.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      Tensor4<T> x({b, first.sources, first.receivers, first.time});
      Tensor4<T> y({b, 1, n, n});
      for (std::size_t k = 0; k < b; ++k) {
        const std::size_t idx = order[start + k];
        detail::copy_cube(cubes[idx], model.norm_scale, x, k);
        T* dst = y.plane(k, 0);
        for (std::size_t p = 0; p < n * n; ++p) dst[p] = static_cast<T>(normalize_speed(labels[idx].values[p], c_min, c_max));
      }
      std::vector<double> mask;
      if (cfg.random_mask) mask = rademacher_mask(first.sources, mask_rng);
      model.params.zero_grad();
      nn::Tape<T> tape(&model.params);
      nn::Var pred = inversion_forward(model.encoding, model.net, tape, tape.constant(std::move(x)), mask);
      nn::Var loss = nn::mse_loss(tape, pred, y, "loss_fwi");
      total += static_cast<double>(tape.value(loss)[0]) * static_cast<double>(b);
      tape.backward(loss);
      nn::adam_step(model.params, cfg.adam);
    }
    model.loss_history.push_back(total / static_cast<double>(cubes.size()));
    if (cfg.verbose) std::cerr << "train-fwi epoch " << epoch + 1 << " loss " << model.loss_history.back() << "\n";
  }
  return model;
}

/// Inference with the mask disabled. A cube whose dims differ from training is reported on
/// `diag` and rejected.
template <class T>
SosMap reconstruct(FwiModel<T>& model, const WaveformCube& cube, double dx, std::ostream* diag = &std::cerr) {
  if (cube.sources != model.encoding.input_sources || cube.receivers != model.net.receivers ||
      cube.time != model.net.time) {
    const std::string msg = "reconstruct: cube " + cube.dims() + " does not match the trained density (" +
                            std::to_string(model.encoding.input_sources) + ", " +
                            std::to_string(model.net.receivers) + ", " + std::to_string(model.net.time) + ")";
    if (diag) *diag << "error: " << msg << "\n";
    throw DataError(msg);
  }
  Tensor4<T> x({1, cube.sources, cube.receivers, cube.time});
  detail::copy_cube(cube, model.norm_scale, x, 0);
  nn::Tape<T> tape(&model.params);
  const nn::Var y = inversion_forward(model.encoding, model.net, tape, tape.constant(std::move(x)));
  const Tensor4<T>& out = tape.value(y);
  const std::size_t n = model.net.map_n;
  SosMap map(n, dx, model.net.c_min);
  for (std::size_t p = 0; p < n * n; ++p) {
    const double c = denormalize_speed(static_cast<double>(out[p]), model.net.c_min, model.net.c_max);
    map.values[p] = std::clamp(c, model.net.c_min, model.net.c_max);
  }
  return map;
}

}  // namespace apsusct
