#pragma once

// 2D constant-density acoustic forward model: second-order leapfrog, 5-point Laplacian,
// exponential sponge, nearest-node point sources and receivers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "apsusct/errors.hpp"
#include "apsusct/geometry.hpp"
#include "apsusct/parallel.hpp"
#include "apsusct/phantom.hpp"

namespace apsusct {

inline double cfl_dt(double dx, double c_max) { return dx / (c_max * std::numbers::sqrt2); }

/// Cell size giving `points_per_wavelength` nodes per shortest wavelength.
inline double dx_for_frequency(double f_peak, double c_min, double points_per_wavelength = 8.0) {
  return c_min / f_peak / points_per_wavelength;
}

struct SimGrid {
  std::size_t n = 0;
  double dx = 0.0;
  double dt = 0.0;
  std::size_t time_steps = 0;
  std::size_t sponge_width = 20;
  double sponge_strength = 0.0015;

  /// Validated grid; rejects dt above the CFL bound for c_max.
  static SimGrid make(std::size_t n, double dx, double dt, std::size_t time_steps, double c_max,
                      std::size_t sponge_width = 20, double sponge_strength = 0.0015) {
    SimGrid g{n, dx, dt, time_steps, sponge_width, sponge_strength};
    g.validate(c_max);
    return g;
  }

  std::size_t padded() const { return n + 2 * sponge_width; }

  void validate(double c_max) const {
    if (n == 0 || !(dx > 0.0) || !(dt > 0.0) || time_steps == 0) {
      throw ConfigError("simulation grid needs n, dx, dt and time_steps > 0");
    }
    if (sponge_width < 10) throw ConfigError("sponge width must be >= 10 cells");
    if (!(sponge_strength >= 0.0)) throw ConfigError("sponge strength must be >= 0");
    const double limit = cfl_dt(dx, c_max);
    if (dt > limit) {
      throw ConfigError("time step " + std::to_string(dt) + " s exceeds CFL limit " + std::to_string(limit) +
                        " s for c_max " + std::to_string(c_max) + " m/s");
    }
  }
};

struct RickerSource {
  double f_peak = 0.3e6;
  double t0 = 5.0e-6;
  double amplitude = 1.0;

  static RickerSource with_default_delay(double f_peak, double amplitude = 1.0) {
    return {f_peak, 1.5 / f_peak, amplitude};
  }

  void validate() const {
    if (!(f_peak > 0.0)) throw ConfigError("Ricker peak frequency must be positive");
    if (t0 < 1.5 / f_peak * (1.0 - 1e-12)) throw ConfigError("Ricker delay must be >= 1.5 / f_peak");
  }
};

inline double ricker(double t, const RickerSource& src) {
  const double a = std::numbers::pi * src.f_peak * (t - src.t0);
  const double a2 = a * a;
  return src.amplitude * (1.0 - 2.0 * a2) * std::exp(-a2);
}

/// Recorded pressure, layout sources x receivers x time (row-major).
struct WaveformCube {
  std::size_t sources = 0;
  std::size_t receivers = 0;
  std::size_t time = 0;
  std::vector<double> values;
  AcquisitionConfig acquisition{};

  WaveformCube() = default;
  WaveformCube(std::size_t s, std::size_t r, std::size_t t, AcquisitionConfig acq = {})
      : sources(s), receivers(r), time(t), values(s * r * t, 0.0), acquisition(acq) {}

  double& at(std::size_t s, std::size_t r, std::size_t k) { return values[(s * receivers + r) * time + k]; }
  double at(std::size_t s, std::size_t r, std::size_t k) const { return values[(s * receivers + r) * time + k]; }
  std::span<double> shot(std::size_t s) { return {values.data() + s * receivers * time, receivers * time}; }
  std::span<const double> shot(std::size_t s) const { return {values.data() + s * receivers * time, receivers * time}; }

  bool same_dims(const WaveformCube& o) const {
    return sources == o.sources && receivers == o.receivers && time == o.time;
  }
  std::string dims() const {
    return "(" + std::to_string(sources) + ", " + std::to_string(receivers) + ", " + std::to_string(time) + ")";
  }

  void validate() const {
    if (values.size() != sources * receivers * time) throw DataError("waveform cube storage does not match " + dims());
    if (acquisition.n_sources != sources || acquisition.n_receivers != receivers || acquisition.time_steps != time) {
      throw DataError("waveform cube " + dims() + " disagrees with its acquisition config");
    }
  }
};

/// Traces (receivers x time) of one shot driven by source samples signal[k] = S(k dt).
inline std::vector<double> simulate_shot_signal(const SosMap& sos, const SimGrid& grid, const Point2& src_pos,
                                                const std::vector<Point2>& recv_positions,
                                                std::span<const double> signal) {
  if (sos.n != grid.n || std::abs(sos.dx - grid.dx) > 1e-12 * grid.dx) {
    throw ConfigError("speed map (" + std::to_string(sos.n) + " cells, dx " + std::to_string(sos.dx) +
                      ") does not match simulation grid (" + std::to_string(grid.n) + " cells, dx " +
                      std::to_string(grid.dx) + ")");
  }
  grid.validate(sos.max());
  if (signal.size() < grid.time_steps) throw ConfigError("source signal shorter than time_steps");

  const std::size_t w = grid.sponge_width;
  const std::size_t side = grid.padded();
  const long n = static_cast<long>(grid.n);
  const double origin = static_cast<double>(grid.n / 2);
  auto node_of = [&](const Point2& p, const char* what) {
    const long row = std::lround(p.y / grid.dx + origin);
    const long col = std::lround(p.x / grid.dx + origin);
    if (row < 0 || col < 0 || row >= n || col >= n) {
      throw ConfigError(std::string(what) + " at (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                        ") m lies outside the simulation interior");
    }
    return (static_cast<std::size_t>(row) + w) * side + static_cast<std::size_t>(col) + w;
  };
  const std::size_t src = node_of(src_pos, "source");
  std::vector<std::size_t> recv;
  recv.reserve(recv_positions.size());
  for (const auto& p : recv_positions) recv.push_back(node_of(p, "receiver"));

  // Per-node (c dt / dx)^2 with the speed map extended into the sponge by edge replication, and
  // the sponge damping factor g = exp(-strength * depth^2).
  std::vector<double> coef(side * side);
  std::vector<double> g(side * side);
  std::vector<double> g2(side * side);
  const double ratio = grid.dt / grid.dx;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const long ir = std::clamp(static_cast<long>(r) - static_cast<long>(w), 0L, n - 1);
      const long ic = std::clamp(static_cast<long>(c) - static_cast<long>(w), 0L, n - 1);
      const double speed = sos.at(static_cast<std::size_t>(ir), static_cast<std::size_t>(ic));
      const std::size_t i = r * side + c;
      coef[i] = speed * speed * ratio * ratio;
      const long depth_r = std::max({0L, static_cast<long>(w) - static_cast<long>(r),
                                     static_cast<long>(r) - static_cast<long>(w + grid.n - 1)});
      const long depth_c = std::max({0L, static_cast<long>(w) - static_cast<long>(c),
                                     static_cast<long>(c) - static_cast<long>(w + grid.n - 1)});
      const double depth = static_cast<double>(std::max(depth_r, depth_c));
      g[i] = std::exp(-grid.sponge_strength * depth * depth);
      g2[i] = g[i] * g[i];
    }
  }

  const std::size_t steps = grid.time_steps;
  std::vector<double> traces(recv.size() * steps, 0.0);
  std::vector<double> prev(side * side, 0.0);
  std::vector<double> cur(side * side, 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t j = 0; j < recv.size(); ++j) traces[j * steps + k] = cur[recv[j]];
    if (k + 1 == steps) break;
    bool finite = true;
    for (std::size_t r = 1; r + 1 < side; ++r) {
      const std::size_t row = r * side;
      for (std::size_t c = 1; c + 1 < side; ++c) {
        const std::size_t i = row + c;
        const double lap = cur[i - 1] + cur[i + 1] + cur[i - side] + cur[i + side] - 4.0 * cur[i];
        const double next = g[i] * (2.0 * cur[i] + coef[i] * lap) - g2[i] * prev[i];
        finite &= std::isfinite(next);
        prev[i] = next;
      }
    }
    prev[src] += g[src] * coef[src] * signal[k];
    if (!finite || !std::isfinite(prev[src])) {
      throw NumericError("wave field became non-finite at time step " + std::to_string(k + 1));
    }
    std::swap(prev, cur);
  }
  return traces;
}

inline std::vector<double> ricker_samples(const RickerSource& wavelet, double dt, std::size_t steps) {
  wavelet.validate();
  std::vector<double> s(steps);
  for (std::size_t k = 0; k < steps; ++k) s[k] = ricker(static_cast<double>(k) * dt, wavelet);
  return s;
}

/// Traces (receivers x time) of one shot.
inline std::vector<double> simulate_shot(const SosMap& sos, const SimGrid& grid, const Point2& src_pos,
                                         const std::vector<Point2>& recv_positions, const RickerSource& wavelet) {
  return simulate_shot_signal(sos, grid, src_pos, recv_positions, ricker_samples(wavelet, grid.dt, grid.time_steps));
}

/// One shot per source, sources co-located with every (n_receivers / n_sources)-th receiver.
inline WaveformCube simulate_acquisition(const SosMap& sos, const AcquisitionConfig& cfg, const SimGrid& grid,
                                         const RickerSource& wavelet, std::size_t workers = 1) {
  cfg.validate();
  if (cfg.time_steps != grid.time_steps) {
    throw ConfigError("acquisition time_steps " + std::to_string(cfg.time_steps) + " differ from grid time_steps " +
                      std::to_string(grid.time_steps));
  }
  if (std::abs(cfg.sample_dt - grid.dt) > 1e-12 * grid.dt) throw ConfigError("acquisition sample_dt differs from grid dt");
  if (cfg.ring.grid_n != grid.n || std::abs(cfg.ring.dx - grid.dx) > 1e-12 * grid.dx) {
    throw ConfigError("transducer ring grid does not match simulation grid");
  }
  const auto sources = transducer_positions(cfg.n_sources, cfg.ring);
  const auto receivers = transducer_positions(cfg.n_receivers, cfg.ring);
  WaveformCube cube(cfg.n_sources, cfg.n_receivers, cfg.time_steps, cfg);
  parallel_for(cfg.n_sources, workers, [&](std::size_t s) {
    const auto traces = simulate_shot(sos, grid, sources[s], receivers, wavelet);
    std::copy(traces.begin(), traces.end(), cube.shot(s).begin());
  });
  return cube;
}

/// Keeps the stride-subset of sources and receivers that a sparser acquisition occupies.
inline WaveformCube restrict_cube(const WaveformCube& dense, const AcquisitionConfig& sparse) {
  const auto src = subsample_indices(dense.sources, sparse.n_sources);
  const auto rec = subsample_indices(dense.receivers, sparse.n_receivers);
  WaveformCube out(src.size(), rec.size(), dense.time, sparse);
  for (std::size_t s = 0; s < src.size(); ++s)
    for (std::size_t r = 0; r < rec.size(); ++r)
      for (std::size_t k = 0; k < dense.time; ++k) out.at(s, r, k) = dense.at(src[s], rec[r], k);
  return out;
}

}  // namespace apsusct
