#pragma once

// Sparse-to-dense waveform upscaling: zero interleaving plus a learned encoder-decoder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "apsusct/errors.hpp"
#include "apsusct/geometry.hpp"
#include "apsusct/nn/layers.hpp"
#include "apsusct/nn/ops.hpp"
#include "apsusct/nn/param_store.hpp"
#include "apsusct/nn/tape.hpp"
#include "apsusct/random.hpp"
#include "apsusct/wave_sim.hpp"

namespace apsusct {

struct InterleavedCube {
  WaveformCube cube;
  std::vector<bool> source_mask;
  std::vector<bool> receiver_mask;
};

/// Places the sparse traces on their stride slots of the target layout; zeros elsewhere.
inline InterleavedCube interleave_zeros(const WaveformCube& sparse, const AcquisitionConfig& target) {
  if (sparse.time != target.time_steps) {
    throw ConfigError("interleave: time length " + std::to_string(sparse.time) + " differs from target " +
                      std::to_string(target.time_steps));
  }
  const auto src = subsample_indices(target.n_sources, sparse.sources);
  const auto rec = subsample_indices(target.n_receivers, sparse.receivers);
  InterleavedCube out{WaveformCube(target.n_sources, target.n_receivers, target.time_steps, target),
                      std::vector<bool>(target.n_sources, false), std::vector<bool>(target.n_receivers, false)};
  for (std::size_t s : src) out.source_mask[s] = true;
  for (std::size_t r : rec) out.receiver_mask[r] = true;
  for (std::size_t s = 0; s < src.size(); ++s)
    for (std::size_t r = 0; r < rec.size(); ++r)
      std::copy_n(sparse.values.begin() + static_cast<long>((s * sparse.receivers + r) * sparse.time), sparse.time,
                  &out.cube.at(src[s], rec[r], 0));
  return out;
}

/// 15 weighted layers: 7 strided conv encoders, 7 mirrored conv_transpose decoders, 1 output conv.
/// The network maps a 1-channel (height x width) image to the same extent.
struct UpscalerSpec {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t base_channels = 8;
  std::vector<nn::LayerSpec> layers;

  static constexpr std::size_t encoder_stages = 7;
  static constexpr std::size_t layer_count = 2 * encoder_stages + 1;

  /// Strides alternate between width (even stages) and height (odd stages); an axis that cannot
  /// shrink further falls back to the other one, or to stride 1.
  static UpscalerSpec make(std::size_t height, std::size_t width, std::size_t base_channels = 8) {
    if (height == 0 || width == 0 || base_channels == 0) throw ConfigError("upscaler needs non-empty dims");
    UpscalerSpec s{height, width, base_channels, {}};
    std::vector<std::size_t> ch(encoder_stages);
    for (std::size_t i = 0; i < encoder_stages; ++i) ch[i] = base_channels << std::min<std::size_t>(i / 2, 2);
    std::vector<nn::LayerSpec> enc;
    std::size_t h = height;
    std::size_t w = width;
    std::size_t in_c = 1;
    auto axis = [](std::size_t extent, std::size_t& k, std::size_t& stride, std::size_t& pad) {
      if (extent == 1) return;
      stride = 2;
      pad = 1;
      k = extent % 2 == 0 ? 4 : 3;
    };
    for (std::size_t i = 0; i < encoder_stages; ++i) {
      nn::LayerSpec l = nn::LayerSpec::conv(in_c, ch[i], 3, 1, 1);
      const bool prefer_width = i % 2 == 0;
      const bool use_width = prefer_width ? w > 1 : (h == 1 && w > 1);
      const bool use_height = !use_width && h > 1;
      if (use_width) axis(w, l.kernel_w, l.geometry.stride_w, l.geometry.pad_w);
      if (use_height) axis(h, l.kernel_h, l.geometry.stride_h, l.geometry.pad_h);
      if (l.geometry.stride_w == 2) w = (w + 1) / 2;
      if (l.geometry.stride_h == 2) h = (h + 1) / 2;
      enc.push_back(l);
      in_c = ch[i];
    }
    s.layers = enc;
    for (std::size_t j = 0; j < encoder_stages; ++j) {
      const nn::LayerSpec& e = enc[encoder_stages - 1 - j];
      const std::size_t out_c = j + 1 < encoder_stages ? ch[encoder_stages - 2 - j] : base_channels;
      nn::LayerSpec d = e;
      d.kind = nn::LayerKind::conv_transpose;
      d.in_channels = e.out_channels;
      d.out_channels = out_c;
      s.layers.push_back(d);
    }
    s.layers.push_back(nn::LayerSpec::conv(base_channels, 1, 3, 1, 1));
    s.validate();
    return s;
  }

  /// Shape of every encoder level, index 0 being the input.
  std::vector<Shape4> level_shapes() const {
    std::vector<Shape4> shapes{{1, 1, height, width}};
    for (std::size_t i = 0; i < encoder_stages; ++i) {
      const auto& l = layers[i];
      shapes.push_back(nn::conv2d_output_shape(shapes.back(), {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w},
                                               l.geometry));
    }
    return shapes;
  }

  void validate() const {
    if (layers.size() != layer_count) {
      throw ConfigError("upscaler must have exactly 15 layers, got " + std::to_string(layers.size()));
    }
    for (const auto& l : layers) nn::validate(l);
    const auto levels = level_shapes();
    Shape4 cur = levels.back();
    for (std::size_t j = 0; j < encoder_stages; ++j) {
      const auto& l = layers[encoder_stages + j];
      if (l.kind != nn::LayerKind::conv_transpose) throw ConfigError("upscaler decoder layers must be conv_transpose");
      cur = nn::conv_transpose2d_output_shape(cur, {l.in_channels, l.out_channels, l.kernel_h, l.kernel_w},
                                              l.geometry);
      const Shape4& skip = levels[encoder_stages - 1 - j];
      if (cur.h != skip.h || cur.w != skip.w) {
        throw ConfigError("upscaler decoder stage " + std::to_string(j + 1) + " produces " + cur.str() +
                          ", expected extent " + std::to_string(skip.h) + "x" + std::to_string(skip.w));
      }
      if (j + 1 < encoder_stages && cur.c != skip.c) throw ConfigError("upscaler skip channel mismatch");
    }
    const auto& out = layers.back();
    if (out.kind != nn::LayerKind::conv || out.out_channels != 1 || out.geometry.stride_h != 1 ||
        out.geometry.stride_w != 1 || out.in_channels != cur.c) {
      throw ConfigError("upscaler output layer must be a stride-1 conv to one channel");
    }
  }
};

template <class T>
void init_upscaler(const UpscalerSpec& spec, const std::string& prefix, nn::ParamStore<T>& store, Rng& rng,
                   bool zero_output = false) {
  spec.validate();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    nn::init_layer(spec.layers[i], prefix + "/layer" + std::to_string(i), store, rng,
                   zero_output && i + 1 == spec.layers.size());
  }
}

/// Forward pass on a batch of 1-channel images (N, 1, height, width).
template <class T>
nn::Var upscaler_forward(const UpscalerSpec& spec, const std::string& prefix, nn::Tape<T>& t, nn::Var x) {
  const auto& in = t.value(x).shape();
  if (in.c != 1 || in.h != spec.height || in.w != spec.width) {
    throw DataError("upscaler expects (N, 1, " + std::to_string(spec.height) + ", " + std::to_string(spec.width) +
                    "), got " + in.str());
  }
  const std::size_t E = UpscalerSpec::encoder_stages;
  auto name = [&](std::size_t i) { return prefix + "/layer" + std::to_string(i); };
  std::vector<nn::Var> levels{x};
  for (std::size_t i = 0; i < E; ++i) {
    nn::Var h = nn::apply_layer(spec.layers[i], name(i), t, levels.back());
    levels.push_back(nn::leaky_relu(t, h, nn::default_negative_slope, name(i) + "/act"));
  }
  nn::Var h = levels.back();
  for (std::size_t j = 0; j < E; ++j) {
    const std::size_t i = E + j;
    h = nn::apply_layer(spec.layers[i], name(i), t, h);
    h = nn::leaky_relu(t, h, nn::default_negative_slope, name(i) + "/act");
    h = nn::add(t, h, levels[E - 1 - j], name(i) + "/skip");
  }
  return nn::apply_layer(spec.layers.back(), name(spec.layers.size() - 1), t, h);
}

struct WaveTrainConfig {
  std::size_t epochs = 50;
  nn::AdamConfig adam{};
  std::uint64_t seed = 0;
  std::size_t base_channels = 8;
  bool zero_output = true;
  bool verbose = false;
};

/// Trained upscaler: optional receiver-axis and source-axis networks plus the global amplitude scale.
template <class T>
struct UpscalerModel {
  std::size_t sparse_sources = 0;
  std::size_t sparse_receivers = 0;
  std::size_t dense_sources = 0;
  std::size_t dense_receivers = 0;
  std::size_t time = 0;
  double norm_scale = 1.0;
  std::optional<UpscalerSpec> receiver_net;
  std::optional<UpscalerSpec> source_net;
  nn::ParamStore<T> params;
  std::vector<double> loss_history;

  bool receivers_upscaled() const { return dense_receivers != sparse_receivers; }
  bool sources_upscaled() const { return dense_sources != sparse_sources; }
};

namespace detail {

/// Source slices of a cube as a (S, 1, R, K) tensor, scaled by 1/scale.
template <class T>
Tensor4<T> shots_tensor(const WaveformCube& c, double scale) {
  Tensor4<T> t({c.sources, 1, c.receivers, c.time});
  for (std::size_t i = 0; i < c.values.size(); ++i) t[i] = static_cast<T>(c.values[i] / scale);
  return t;
}

/// Receiver slices of a cube as a (R, 1, S, K) tensor, scaled by 1/scale.
template <class T>
Tensor4<T> receivers_tensor(const WaveformCube& c, double scale) {
  Tensor4<T> t({c.receivers, 1, c.sources, c.time});
  for (std::size_t s = 0; s < c.sources; ++s)
    for (std::size_t r = 0; r < c.receivers; ++r)
      for (std::size_t k = 0; k < c.time; ++k) t.at(r, 0, s, k) = static_cast<T>(c.at(s, r, k) / scale);
  return t;
}

template <class T>
void store_shots(const Tensor4<T>& t, double scale, WaveformCube& c) {
  for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] = static_cast<double>(t[i]) * scale;
}

template <class T>
void store_receivers(const Tensor4<T>& t, double scale, WaveformCube& c) {
  for (std::size_t s = 0; s < c.sources; ++s)
    for (std::size_t r = 0; r < c.receivers; ++r)
      for (std::size_t k = 0; k < c.time; ++k) c.at(s, r, k) = static_cast<double>(t.at(r, 0, s, k)) * scale;
}

inline AcquisitionConfig with_counts(AcquisitionConfig a, std::size_t sources, std::size_t receivers) {
  a.n_sources = sources;
  a.n_receivers = receivers;
  return a;
}

}  // namespace detail

inline double max_abs(const std::vector<WaveformCube>& cubes) {
  double m = 0.0;
  for (const auto& c : cubes)
    for (double v : c.values) m = std::max(m, std::abs(v));
  return m;
}

/// Adam on mse(upscale(sparse), dense). Each step processes one cube through one network; the
/// receiver network sees receiver-interleaved shots at the sparse source positions, the source
/// network sees source-interleaved receiver gathers of the dense label.
template <class T>
UpscalerModel<T> train_upscaler(const std::vector<WaveformCube>& sparse, const std::vector<WaveformCube>& dense,
                                const WaveTrainConfig& cfg) {
  if (sparse.empty() || sparse.size() != dense.size()) {
    throw DataError("train_upscaler needs equally many sparse and dense cubes (" + std::to_string(sparse.size()) +
                    " vs " + std::to_string(dense.size()) + ")");
  }
  UpscalerModel<T> model;
  model.sparse_sources = sparse[0].sources;
  model.sparse_receivers = sparse[0].receivers;
  model.dense_sources = dense[0].sources;
  model.dense_receivers = dense[0].receivers;
  model.time = dense[0].time;
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    if (sparse[i].sources != model.sparse_sources || sparse[i].receivers != model.sparse_receivers ||
        dense[i].sources != model.dense_sources || dense[i].receivers != model.dense_receivers ||
        sparse[i].time != model.time || dense[i].time != model.time) {
      throw DataError("training pair " + std::to_string(i) + " has dims " + sparse[i].dims() + " -> " +
                      dense[i].dims() + ", expected " + sparse[0].dims() + " -> " + dense[0].dims());
    }
  }
  subsample_indices(model.dense_sources, model.sparse_sources);
  subsample_indices(model.dense_receivers, model.sparse_receivers);
  model.norm_scale = max_abs(dense);
  if (!(model.norm_scale > 0.0)) throw DataError("train_upscaler: all dense labels are zero");

  Rng init_rng = derive_rng(cfg.seed, 1);
  if (model.receivers_upscaled() || !model.sources_upscaled()) {
    model.receiver_net = UpscalerSpec::make(model.dense_receivers, model.time, cfg.base_channels);
    init_upscaler(*model.receiver_net, "recv", model.params, init_rng, cfg.zero_output);
  }
  if (model.sources_upscaled()) {
    model.source_net = UpscalerSpec::make(model.dense_sources, model.time, cfg.base_channels);
    init_upscaler(*model.source_net, "src", model.params, init_rng, cfg.zero_output);
  }

  // Fixed training tensors, built once.
  struct Sample {
    const UpscalerSpec* spec;
    std::string prefix;
    Tensor4<T> input;
    Tensor4<T> label;
  };
  std::vector<Sample> samples;
  const double scale = model.norm_scale;
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    const AcquisitionConfig acq = dense[i].acquisition;
    if (model.receiver_net) {
      const auto mid = detail::with_counts(acq, model.sparse_sources, model.dense_receivers);
      const WaveformCube in = interleave_zeros(sparse[i], mid).cube;
      const WaveformCube label = model.sources_upscaled() ? restrict_cube(dense[i], mid) : dense[i];
      samples.push_back({&*model.receiver_net, "recv", detail::shots_tensor<T>(in, scale),
                         detail::shots_tensor<T>(label, scale)});
    }
    if (model.source_net) {
      const auto mid = detail::with_counts(acq, model.sparse_sources, model.dense_receivers);
      const WaveformCube gathered = restrict_cube(dense[i], mid);
      const WaveformCube in = interleave_zeros(gathered, acq).cube;
      samples.push_back({&*model.source_net, "src", detail::receivers_tensor<T>(in, scale),
                         detail::receivers_tensor<T>(dense[i], scale)});
    }
  }

  Rng order_rng = derive_rng(cfg.seed, 2);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      const Sample& s = samples[idx];
      model.params.zero_grad();
      nn::Tape<T> tape(&model.params);
      nn::Var y = upscaler_forward(*s.spec, s.prefix, tape, tape.constant(s.input));
      nn::Var loss = nn::mse_loss(tape, y, s.label, s.prefix + "/loss_wave");
      total += static_cast<double>(tape.value(loss)[0]);
      tape.backward(loss);
      nn::adam_step(model.params, cfg.adam);
    }
    model.loss_history.push_back(total / static_cast<double>(samples.size()));
    if (cfg.verbose) std::cerr << "train-wave epoch " << epoch + 1 << " loss " << model.loss_history.back() << "\n";
  }
  return model;
}

/// Interleave, then the receiver-axis network per source shot, then the source-axis network per
/// receiver gather. Mismatched densities are reported on `diag` and processed anyway.
template <class T>
WaveformCube upscale(UpscalerModel<T>& model, const WaveformCube& sparse, const AcquisitionConfig& target,
                     std::ostream* diag = &std::cerr) {
  if (target.n_sources != model.dense_sources || target.n_receivers != model.dense_receivers ||
      sparse.sources != model.sparse_sources || sparse.receivers != model.sparse_receivers) {
    if (diag) {
      *diag << "warning: upscaler trained for (" << model.sparse_sources << "," << model.sparse_receivers << ")->("
            << model.dense_sources << "," << model.dense_receivers << "), applied to (" << sparse.sources << ","
            << sparse.receivers << ")->(" << target.n_sources << "," << target.n_receivers << ")\n";
    }
  }
  if (sparse.time != model.time) throw DataError("upscale: time length differs from the trained model");
  const double scale = model.norm_scale;
  WaveformCube cur;
  if (model.receiver_net) {
    const auto mid = detail::with_counts(target, sparse.sources, target.n_receivers);
    cur = interleave_zeros(sparse, mid).cube;
    if (model.receiver_net->height != cur.receivers) throw DataError("upscale: receiver count differs from the model");
    nn::Tape<T> tape(&model.params);
    nn::Var y = upscaler_forward(*model.receiver_net, "recv", tape, tape.constant(detail::shots_tensor<T>(cur, scale)));
    detail::store_shots(tape.value(y), scale, cur);
  } else {
    cur = sparse;
  }
  if (model.source_net) {
    cur = interleave_zeros(cur, target).cube;
    if (model.source_net->height != cur.sources) throw DataError("upscale: source count differs from the model");
    nn::Tape<T> tape(&model.params);
    nn::Var y =
        upscaler_forward(*model.source_net, "src", tape, tape.constant(detail::receivers_tensor<T>(cur, scale)));
    detail::store_receivers(tape.value(y), scale, cur);
  }
  cur.acquisition = target;
  return cur;
}

}  // namespace apsusct
