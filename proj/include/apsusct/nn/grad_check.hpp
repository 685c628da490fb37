#pragma once

// Finite-difference verification of the analytic gradients produced by Tape::backward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "apsusct/nn/layers.hpp"
#include "apsusct/random.hpp"

namespace apsusct::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_entry;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient is ~0 from
/// reporting round-off noise as a relative error.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Checks d(sum(forward(x) * R))/d(theta) for every parameter in `store` and for the input `x`,
/// against central differences (f(theta+eps) - f(theta-eps)) / (2 eps). Tensors with more than
/// `max_entries` elements are checked on a random subset of that size.
template <class Forward>
GradCheckReport grad_check_function(ParamStore<double>& store, const Tensor4<double>& input, Forward forward,
                                    double eps, std::size_t max_entries, Rng& rng) {
  Tensor4<double> probe;
  {
    Tape<double> dry(&store);
    const Var y = forward(dry, dry.constant(input));
    probe = Tensor4<double>(dry.value(y).shape());
    for (auto& v : probe.values()) v = normal(rng);
  }
  auto output_at = [&](const Tensor4<double>& x) {
    Tape<double> t(&store);
    return t.value(forward(t, t.constant(x)));
  };
  // Differences are taken per output element before weighting, so outputs the perturbation
  // does not reach cancel exactly instead of adding round-off.
  auto central = [&](const Tensor4<double>& up, const Tensor4<double>& down) {
    double acc = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) acc += probe[i] * (up[i] - down[i]);
    return acc / (2.0 * eps);
  };

  store.zero_grad();
  Tape<double> tape(&store);
  const Var x = tape.leaf(input, "input");
  tape.backward(weighted_sum(tape, forward(tape, x), probe));
  const Tensor4<double> input_grad = tape.grad(x);

  GradCheckReport report;
  auto pick = [&](std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries);
      std::sort(idx.begin(), idx.end());
    }
    return idx;
  };
  auto note = [&](double analytic, double numeric, const std::string& name, std::size_t i) {
    const double e = relative_error(analytic, numeric);
    ++report.checked;
    if (e >= report.max_relative_error) {
      report.max_relative_error = e;
      report.worst_entry = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic) +
                           " numeric=" + std::to_string(numeric);
    }
  };

  for (auto& [name, p] : store.entries()) {
    const Tensor4<double> analytic = p.grad;
    for (std::size_t i : pick(p.value.size())) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const Tensor4<double> up = output_at(input);
      p.value[i] = saved - eps;
      const Tensor4<double> down = output_at(input);
      p.value[i] = saved;
      note(analytic[i], central(up, down), name, i);
    }
  }
  Tensor4<double> x_mod = input;
  for (std::size_t i : pick(input.size())) {
    const double saved = x_mod[i];
    x_mod[i] = saved + eps;
    const Tensor4<double> up = output_at(x_mod);
    x_mod[i] = saved - eps;
    const Tensor4<double> down = output_at(x_mod);
    x_mod[i] = saved;
    note(input_grad[i], central(up, down), "input", i);
  }
  return report;
}

/// Input extent that gives a whole-number output extent of 3 for one conv axis.
inline std::size_t grad_check_extent(const LayerSpec& s, bool height) {
  const std::size_t k = height ? s.kernel_h : s.kernel_w;
  const std::size_t st = height ? s.geometry.stride_h : s.geometry.stride_w;
  const std::size_t p = height ? s.geometry.pad_h : s.geometry.pad_w;
  if (s.kind != LayerKind::conv) return 3;
  return st * 2 + k > 2 * p ? st * 2 + k - 2 * p : 1;
}

/// Worst relative error of one layer kind over `trial_count` independent random draws (64-bit).
inline GradCheckReport grad_check(const LayerSpec& spec, int trial_count, double eps, std::uint64_t seed = 1234) {
  validate(spec);
  GradCheckReport worst;
  for (int trial = 0; trial < trial_count; ++trial) {
    Rng rng = derive_rng(seed, static_cast<std::uint64_t>(trial));
    ParamStore<double> store;
    init_layer(spec, "layer", store, rng);
    for (auto& [name, p] : store.entries()) {
      for (auto& v : p.value.values()) v += 0.5 * normal(rng);  // move gamma/beta off their defaults
    }
    Shape4 in_shape{2, spec.in_channels, 4, 5};
    if (spec.kind == LayerKind::conv || spec.kind == LayerKind::conv_transpose) {
      in_shape.h = grad_check_extent(spec, true);
      in_shape.w = grad_check_extent(spec, false);
    } else if (spec.kind == LayerKind::linear) {
      in_shape.h = in_shape.w = 1;
    }
    Tensor4<double> x(in_shape);
    for (auto& v : x.values()) {
      v = normal(rng);
      if (spec.kind == LayerKind::leaky_relu) {
        while (std::abs(v) < 10.0 * eps) v = normal(rng);
      }
    }
    auto fwd = [&spec](Tape<double>& t, Var in) { return apply_layer(spec, "layer", t, in); };
    const GradCheckReport r = grad_check_function(store, x, fwd, eps, 1u << 20, rng);
    worst.checked += r.checked;
    if (r.max_relative_error >= worst.max_relative_error) {
      worst.max_relative_error = r.max_relative_error;
      worst.worst_entry = r.worst_entry;
    }
  }
  return worst;
}

}  // namespace apsusct::nn
