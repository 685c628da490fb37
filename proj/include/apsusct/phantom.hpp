#pragma once

// Parametric speed-of-sound phantoms: water bath, fatty body disk, glandular and inclusion ellipses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <string>
#include <vector>

#include "apsusct/errors.hpp"
#include "apsusct/random.hpp"

namespace apsusct {

/// n x n grid of speeds (m/s), row-major, row = y. Node (n/2, n/2) is the physical origin.
struct SosMap {
  std::size_t n = 0;
  double dx = 0.0;
  std::vector<double> values;

  SosMap() = default;
  SosMap(std::size_t n_, double dx_, double fill) : n(n_), dx(dx_), values(n_ * n_, fill) {}

  double& at(std::size_t row, std::size_t col) { return values[row * n + col]; }
  double at(std::size_t row, std::size_t col) const { return values[row * n + col]; }
  double min() const { return *std::min_element(values.begin(), values.end()); }
  double max() const { return *std::max_element(values.begin(), values.end()); }

  bool operator==(const SosMap&) const = default;
};

struct PhantomSpec {
  std::size_t n = 32;
  double dx = 5.0e-4;
  double background_speed = 1500.0;
  double c_min = 1400.0;
  double c_max = 1600.0;
  double fat_speed = 1450.0;
  double body_radius_fraction = 0.7;
  int inclusion_count_min = 1;
  int inclusion_count_max = 3;
  /// Target share of body cells covered by high-speed glandular tissue.
  double dense_fraction = 0.45;
  /// Glandular share used for the alternate ("fatty") class in generate_dataset.
  double fatty_fraction = 0.1;
  std::uint64_t seed = 0;

  double body_radius() const { return body_radius_fraction * static_cast<double>(n / 2) * dx; }

  void validate() const {
    if (n < 4 || !(dx > 0.0)) throw ConfigError("phantom needs n >= 4 and dx > 0");
    if (!(c_min > 0.0) || c_min > c_max) {
      throw ConfigError("phantom speed range [" + std::to_string(c_min) + ", " + std::to_string(c_max) +
                        "] is degenerate");
    }
    if (background_speed < c_min || background_speed > c_max) throw ConfigError("background speed outside speed range");
    if (fat_speed < c_min || fat_speed > c_max) throw ConfigError("fat speed outside speed range");
    if (!(body_radius_fraction > 0.0 && body_radius_fraction < 1.0)) {
      throw ConfigError("body_radius_fraction must be in (0, 1)");
    }
    if (inclusion_count_min < 0 || inclusion_count_min > inclusion_count_max) {
      throw ConfigError("inclusion count range is invalid");
    }
    if (dense_fraction < 0.0 || dense_fraction > 1.0 || fatty_fraction < 0.0 || fatty_fraction > 1.0) {
      throw ConfigError("tissue fractions must be in [0, 1]");
    }
  }
};

enum class PhantomClass { fatty, dense };

inline const char* to_string(PhantomClass c) { return c == PhantomClass::dense ? "dense" : "fatty"; }

namespace detail {

struct Ellipse {
  double cx, cy, a, b, theta;

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = dx * std::cos(theta) + dy * std::sin(theta);
    const double v = -dx * std::sin(theta) + dy * std::cos(theta);
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

/// Random ellipse with semi-axes in [lo, hi] * radius, fully inside the disk of that radius.
inline Ellipse random_ellipse(Rng& rng, double radius, double lo, double hi) {
  const double a = uniform(rng, lo, hi) * radius;
  const double b = uniform(rng, lo, hi) * radius;
  const double reach = radius - std::max(a, b);
  const double r = reach * std::sqrt(uniform(rng, 0.0, 1.0));
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return {r * std::cos(phi), r * std::sin(phi), a, b, uniform(rng, 0.0, std::numbers::pi)};
}

inline void box_smooth(SosMap& map) {
  const std::vector<double> src = map.values;
  const long n = static_cast<long>(map.n);
  for (long r = 0; r < n; ++r) {
    for (long c = 0; c < n; ++c) {
      double sum = 0.0;
      int count = 0;
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          const long rr = r + dr;
          const long cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= n || cc >= n) continue;
          sum += src[static_cast<std::size_t>(rr * n + cc)];
          ++count;
        }
      }
      map.values[static_cast<std::size_t>(r * n + c)] = sum / count;
    }
  }
}

}  // namespace detail

/// Physical (x, y) of node (row, col) for a map of side n.
inline std::pair<double, double> node_xy(std::size_t n, double dx, std::size_t row, std::size_t col) {
  const double origin = static_cast<double>(n / 2);
  return {(static_cast<double>(col) - origin) * dx, (static_cast<double>(row) - origin) * dx};
}

/// Mask of nodes inside the body disk.
inline std::vector<bool> body_mask(const PhantomSpec& spec) {
  std::vector<bool> mask(spec.n * spec.n);
  const double r = spec.body_radius();
  for (std::size_t row = 0; row < spec.n; ++row) {
    for (std::size_t col = 0; col < spec.n; ++col) {
      const auto [x, y] = node_xy(spec.n, spec.dx, row, col);
      mask[row * spec.n + col] = x * x + y * y <= r * r;
    }
  }
  return mask;
}

/// Share of body nodes faster than the water background.
inline double tissue_fraction(const SosMap& map, const PhantomSpec& spec) {
  const auto mask = body_mask(spec);
  std::size_t body = 0;
  std::size_t fast = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++body;
    if (map.values[i] > spec.background_speed) ++fast;
  }
  return body == 0 ? 0.0 : static_cast<double>(fast) / static_cast<double>(body);
}

inline SosMap generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = derive_rng(seed, 0x50484e54);
  SosMap map(spec.n, spec.dx, spec.background_speed);
  const auto mask = body_mask(spec);
  const double radius = spec.body_radius();
  std::size_t body_cells = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      map.values[i] = spec.fat_speed;
      ++body_cells;
    }
  }

  auto paint = [&](const detail::Ellipse& e, double speed) {
    std::size_t newly = 0;
    for (std::size_t row = 0; row < spec.n; ++row) {
      for (std::size_t col = 0; col < spec.n; ++col) {
        const std::size_t i = row * spec.n + col;
        if (!mask[i]) continue;
        const auto [x, y] = node_xy(spec.n, spec.dx, row, col);
        if (!e.contains(x, y)) continue;
        if (map.values[i] <= spec.background_speed) ++newly;
        map.values[i] = speed;
      }
    }
    return newly;
  };

  const double gland_lo = std::min(spec.c_max, spec.background_speed + 0.25 * (spec.c_max - spec.background_speed));
  std::size_t gland_cells = 0;
  const double target = spec.dense_fraction * static_cast<double>(body_cells);
  for (int attempt = 0; attempt < 200 && static_cast<double>(gland_cells) < target; ++attempt) {
    const auto e = detail::random_ellipse(rng, radius, 0.15, 0.4);
    gland_cells += paint(e, uniform(rng, gland_lo, spec.c_max));
  }

  const int inclusions = uniform_int(rng, spec.inclusion_count_min, spec.inclusion_count_max);
  for (int k = 0; k < inclusions; ++k) {
    const auto e = detail::random_ellipse(rng, radius, 0.08, 0.22);
    paint(e, uniform(rng, spec.c_min, spec.c_max));
  }

  detail::box_smooth(map);
  for (auto& v : map.values) v = std::clamp(v, spec.c_min, spec.c_max);
  return map;
}

/// Class of dataset element `index`: even indices use `spec` as given, odd ones the fatty share.
inline PhantomClass dataset_class(const PhantomSpec& spec, std::size_t index) {
  if (index % 2 == 0) return spec.dense_fraction >= spec.fatty_fraction ? PhantomClass::dense : PhantomClass::fatty;
  return spec.dense_fraction >= spec.fatty_fraction ? PhantomClass::fatty : PhantomClass::dense;
}

/// Element i is generated from seed + i, so any prefix is independent of `count`.
inline SosMap dataset_element(const PhantomSpec& spec, std::uint64_t seed, std::size_t index) {
  PhantomSpec s = spec;
  if (index % 2 == 1) s.dense_fraction = spec.fatty_fraction;
  return generate_phantom(s, seed + index);
}

inline std::vector<SosMap> generate_dataset(const PhantomSpec& spec, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("phantom dataset count must be >= 1");
  std::vector<SosMap> maps;
  maps.reserve(count);
  for (std::size_t i = 0; i < count; ++i) maps.push_back(dataset_element(spec, seed, i));
  return maps;
}

}  // namespace apsusct
