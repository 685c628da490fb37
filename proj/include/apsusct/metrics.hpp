#pragma once

// Image-quality metrics for speed maps, waveform similarity, and interpolation baselines.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "apsusct/errors.hpp"
#include "apsusct/geometry.hpp"
#include "apsusct/phantom.hpp"
#include "apsusct/wave_sim.hpp"

namespace apsusct {

namespace detail {

inline void require_same_map_dims(const SosMap& a, const SosMap& b, const char* what) {
  if (a.n != b.n || a.values.size() != b.values.size()) {
    throw DataError(std::string(what) + ": map sizes differ (" + std::to_string(a.n) + " vs " + std::to_string(b.n) +
                    ")");
  }
}

inline std::array<double, 49> gaussian_window() {
  std::array<double, 49> w{};
  double sum = 0.0;
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 7; ++c) {
      const double d2 = static_cast<double>((r - 3) * (r - 3) + (c - 3) * (c - 3));
      w[static_cast<std::size_t>(r * 7 + c)] = std::exp(-d2 / (2.0 * 1.5 * 1.5));
      sum += w[static_cast<std::size_t>(r * 7 + c)];
    }
  }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace detail

/// Mean local SSIM over every fully contained 7x7 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03.
inline double ssim(const SosMap& a, const SosMap& b, double dynamic_range) {
  detail::require_same_map_dims(a, b, "ssim");
  if (!(dynamic_range > 0.0)) throw ConfigError("ssim dynamic range must be positive");
  if (a.n < 7) throw DataError("ssim needs maps of at least 7x7");
  static const auto w = detail::gaussian_window();
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const std::size_t span = a.n - 6;
  double total = 0.0;
  for (std::size_t r0 = 0; r0 < span; ++r0) {
    for (std::size_t c0 = 0; c0 < span; ++c0) {
      double mu_a = 0.0;
      double mu_b = 0.0;
      for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t c = 0; c < 7; ++c) {
          mu_a += w[r * 7 + c] * a.at(r0 + r, c0 + c);
          mu_b += w[r * 7 + c] * b.at(r0 + r, c0 + c);
        }
      double var_a = 0.0;
      double var_b = 0.0;
      double cov = 0.0;
      for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t c = 0; c < 7; ++c) {
          const double da = a.at(r0 + r, c0 + c) - mu_a;
          const double db = b.at(r0 + r, c0 + c) - mu_b;
          var_a += w[r * 7 + c] * da * da;
          var_b += w[r * 7 + c] * db * db;
          cov += w[r * 7 + c] * da * db;
        }
      total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  }
  return total / static_cast<double>(span * span);
}

inline double mse(const SosMap& a, const SosMap& b) {
  detail::require_same_map_dims(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  return s / static_cast<double>(a.values.size());
}

/// PSNR in dB; identical inputs give the infinite sentinel instead of a number.
class Psnr {
 public:
  static Psnr infinite() { return Psnr(true, 0.0); }
  static Psnr from_mse(double mse, double peak) {
    if (!(peak > 0.0)) throw ConfigError("psnr peak must be positive");
    if (mse < 0.0) throw DataError("psnr: negative mse");
    if (mse == 0.0) return infinite();
    return Psnr(false, 10.0 * std::log10(peak * peak / mse));
  }

  bool is_infinite() const { return infinite_; }
  double db() const {
    if (infinite_) throw StateError("psnr is infinite (identical inputs); no finite dB value");
    return db_;
  }
  std::string str() const { return infinite_ ? "inf" : std::to_string(db_); }
  bool operator==(const Psnr&) const = default;

 private:
  Psnr(bool inf, double db) : infinite_(inf), db_(db) {}
  bool infinite_;
  double db_;
};

inline Psnr psnr(const SosMap& a, const SosMap& b, double peak) { return Psnr::from_mse(mse(a, b), peak); }

/// Flattened cosine similarity; 0 when either cube is all zeros.
inline double cosine_similarity(const WaveformCube& a, const WaveformCube& b) {
  if (!a.same_dims(b)) throw DataError("cosine_similarity: cube dims " + a.dims() + " vs " + b.dims());
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Share of values strictly above each (ascending) threshold.
inline std::vector<double> threshold_fractions(const std::vector<double>& values, const std::vector<double>& thresholds) {
  if (values.empty()) throw DataError("threshold_fractions: empty value list");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (thresholds[i] < thresholds[i - 1]) throw ConfigError("threshold_fractions: thresholds must be ascending");
  }
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    std::size_t above = 0;
    for (double v : values) above += v > t ? 1 : 0;
    out.push_back(static_cast<double>(above) / static_cast<double>(values.size()));
  }
  return out;
}

struct MetricReport {
  std::vector<double> ssim;
  std::vector<Psnr> psnr;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  /// Mean/std over finite PSNR values; psnr_infinite counts identical reconstructions.
  double psnr_mean = 0.0;
  double psnr_std = 0.0;
  std::size_t psnr_infinite = 0;
  std::vector<double> thresholds{0.8, 0.85, 0.9};
  std::vector<double> fractions;
};

/// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

inline MetricReport evaluate_maps(const std::vector<SosMap>& predicted, const std::vector<SosMap>& truth, double c_min,
                                  double c_max) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw DataError("evaluate_maps: need equal, non-empty prediction and label lists (" +
                    std::to_string(predicted.size()) + " vs " + std::to_string(truth.size()) + ")");
  }
  MetricReport rep;
  std::vector<double> finite_psnr;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    rep.ssim.push_back(ssim(predicted[i], truth[i], c_max - c_min));
    rep.psnr.push_back(psnr(predicted[i], truth[i], c_max - c_min));
    if (rep.psnr.back().is_infinite()) ++rep.psnr_infinite;
    else finite_psnr.push_back(rep.psnr.back().db());
  }
  std::tie(rep.ssim_mean, rep.ssim_std) = mean_std(rep.ssim);
  std::tie(rep.psnr_mean, rep.psnr_std) = mean_std(finite_psnr);
  rep.fractions = threshold_fractions(rep.ssim, rep.thresholds);
  return rep;
}

namespace detail {

inline std::size_t stride_between(std::size_t sparse, std::size_t dense, const char* axis) {
  if (sparse == 0 || dense % sparse != 0) {
    throw ConfigError(std::string(axis) + " count " + std::to_string(sparse) + " does not divide target " +
                      std::to_string(dense));
  }
  return dense / sparse;
}

inline double catmull_rom(double p0, double p1, double p2, double p3, double u) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  return 0.5 * ((-u3 + 2.0 * u2 - u) * p0 + (3.0 * u3 - 5.0 * u2 + 2.0) * p1 + (-3.0 * u3 + 4.0 * u2 + u) * p2 +
                (u3 - u2) * p3);
}

/// Upsamples `rows` (count x len, row-major) to count*stride rows along the first axis.
template <class Fill>
std::vector<double> upsample_rows(const std::vector<double>& rows, std::size_t count, std::size_t len,
                                  std::size_t stride, Fill fill) {
  std::vector<double> out(count * stride * len);
  for (std::size_t j = 0; j < count * stride; ++j) fill(rows, count, len, stride, j, out.data() + j * len);
  return out;
}

inline void nearest_row(const std::vector<double>& rows, std::size_t count, std::size_t len, std::size_t stride,
                        std::size_t j, double* out) {
  std::size_t m = j / stride;
  const std::size_t t = j % stride;
  if (2 * t > stride && m + 1 < count) ++m;  // strictly closer to the next real row; ties stay low
  std::copy(rows.begin() + static_cast<long>(m * len), rows.begin() + static_cast<long>((m + 1) * len), out);
}

inline void cubic_row(const std::vector<double>& rows, std::size_t count, std::size_t len, std::size_t stride,
                      std::size_t j, double* out) {
  const long m = static_cast<long>(j / stride);
  const std::size_t t = j % stride;
  if (t == 0) {
    std::copy(rows.begin() + m * static_cast<long>(len), rows.begin() + (m + 1) * static_cast<long>(len), out);
    return;
  }
  const long last = static_cast<long>(count) - 1;
  // Rows outside [0, last] are linear extrapolations, so degree-1 profiles are reproduced at the edges.
  auto row = [&](long i, std::size_t k) {
    if (count == 1) return rows[k];
    if (i < 0) return rows[k] + static_cast<double>(i) * (rows[len + k] - rows[k]);
    if (i > last) {
      const double a = rows[static_cast<std::size_t>(last) * len + k];
      const double b = rows[static_cast<std::size_t>(last - 1) * len + k];
      return a + static_cast<double>(i - last) * (a - b);
    }
    return rows[static_cast<std::size_t>(i) * len + k];
  };
  const double u = static_cast<double>(t) / static_cast<double>(stride);
  for (std::size_t k = 0; k < len; ++k) out[k] = catmull_rom(row(m - 1, k), row(m, k), row(m + 1, k), row(m + 2, k), u);
}

/// Applies a row upsampler along receivers then sources.
template <class Fill>
WaveformCube upsample_cube(const WaveformCube& sparse, const AcquisitionConfig& target, Fill fill) {
  const std::size_t rs = stride_between(sparse.receivers, target.n_receivers, "receiver");
  const std::size_t ss = stride_between(sparse.sources, target.n_sources, "source");
  if (sparse.time != target.time_steps) throw ConfigError("interpolation target has a different time length");
  const std::size_t t = sparse.time;
  std::vector<double> by_receiver(sparse.sources * target.n_receivers * t);
  for (std::size_t s = 0; s < sparse.sources; ++s) {
    const std::vector<double> shot(sparse.shot(s).begin(), sparse.shot(s).end());
    const auto up = upsample_rows(shot, sparse.receivers, t, rs, fill);
    std::copy(up.begin(), up.end(), by_receiver.begin() + static_cast<long>(s * target.n_receivers * t));
  }
  WaveformCube out(target.n_sources, target.n_receivers, t, target);
  out.values = upsample_rows(by_receiver, sparse.sources, target.n_receivers * t, ss, fill);
  return out;
}

}  // namespace detail

/// Missing rows copy the nearest real row by ring index; ties go to the lower index; no wraparound.
inline WaveformCube nearest_interp(const WaveformCube& sparse, const AcquisitionConfig& target) {
  return detail::upsample_cube(sparse, target, detail::nearest_row);
}

/// Catmull-Rom interpolation along receivers, then sources, with linearly extrapolated edge points.
inline WaveformCube bicubic_interp(const WaveformCube& sparse, const AcquisitionConfig& target) {
  return detail::upsample_cube(sparse, target, detail::cubic_row);
}

}  // namespace apsusct
