#pragma once

// Transducer ring layout, sparse subsets of it, and the element-count cost model.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "apsusct/errors.hpp"

namespace apsusct {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Integer grid location (row = y axis, col = x axis) inside the n x n interior.
struct GridIndex {
  long row = 0;
  long col = 0;
  bool operator==(const GridIndex&) const = default;
};

/// Circular transducer array inside the n x n interior of the simulation grid.
///
/// Physical coordinates are metres with the origin at interior node (n/2, n/2) (integer
/// division); x runs along columns and y along rows. The ring must stay at least
/// `min_margin_cells` from the interior edge, i.e. sponge_width + 2 cells from the padded
/// simulation boundary.
struct RingGeometry {
  Point2 center{};
  double radius = 0.0;
  std::size_t grid_n = 0;
  double dx = 0.0;

  static constexpr double min_margin_cells = 2.0;

  /// Largest centred ring that respects the margin.
  static RingGeometry centered(std::size_t grid_n, double dx, double margin_cells = 3.0) {
    return {{0.0, 0.0}, (static_cast<double>(grid_n / 2) - margin_cells) * dx, grid_n, dx};
  }

  double origin_index() const { return static_cast<double>(grid_n / 2); }

  GridIndex nearest_node(const Point2& p) const {
    return {std::lround(p.y / dx + origin_index()), std::lround(p.x / dx + origin_index())};
  }

  Point2 node_position(std::size_t row, std::size_t col) const {
    return {(static_cast<double>(col) - origin_index()) * dx, (static_cast<double>(row) - origin_index()) * dx};
  }

  /// Number of distinct ring positions at one-cell arc spacing.
  std::size_t capacity() const {
    return static_cast<std::size_t>(std::floor(2.0 * std::numbers::pi * radius / dx));
  }

  void validate() const {
    if (grid_n == 0 || !(dx > 0.0)) throw ConfigError("ring geometry needs grid_n > 0 and dx > 0");
    if (!(radius > 0.0)) throw ConfigError("ring radius must be positive");
    const double lo = min_margin_cells;
    const double hi = static_cast<double>(grid_n - 1) - min_margin_cells;
    auto in_range = [&](double c) {
      const double idx_lo = (c - radius) / dx + origin_index();
      const double idx_hi = (c + radius) / dx + origin_index();
      return idx_lo >= lo - 1e-9 && idx_hi <= hi + 1e-9;
    };
    if (!in_range(center.x) || !in_range(center.y)) {
      throw ConfigError("transducer ring (radius " + std::to_string(radius) + " m) leaves the " +
                        std::to_string(grid_n) + "-cell interior margin");
    }
  }

  bool operator==(const RingGeometry&) const = default;
};

struct AcquisitionConfig {
  std::size_t n_sources = 1;
  std::size_t n_receivers = 1;
  RingGeometry ring{};
  std::size_t time_steps = 1;
  double sample_dt = 0.0;

  /// Checks the invariants needed for simulation: sources <= receivers <= ring capacity, sources
  /// co-located on a stride subset of receiver positions.
  void validate() const {
    ring.validate();
    if (n_sources == 0 || n_receivers == 0) throw ConfigError("acquisition needs at least one source and receiver");
    if (n_sources > n_receivers) throw ConfigError("acquisition has more sources than receivers");
    if (n_receivers % n_sources != 0) {
      throw ConfigError("source count " + std::to_string(n_sources) + " does not divide receiver count " +
                        std::to_string(n_receivers));
    }
    if (n_receivers > ring.capacity()) {
      throw ConfigError(std::to_string(n_receivers) + " receivers exceed ring capacity " +
                        std::to_string(ring.capacity()));
    }
    if (time_steps == 0 || !(sample_dt > 0.0)) throw ConfigError("acquisition needs time_steps > 0 and sample_dt > 0");
  }

  bool operator==(const AcquisitionConfig&) const = default;
};

/// `count` points evenly spaced on the ring, first at angle 0, counter-clockwise.
inline std::vector<Point2> transducer_positions(std::size_t count, const RingGeometry& ring) {
  if (count == 0) throw ConfigError("transducer count must be >= 1");
  ring.validate();
  std::vector<Point2> pts;
  pts.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
    pts.push_back({ring.center.x + ring.radius * std::cos(theta), ring.center.y + ring.radius * std::sin(theta)});
  }
  return pts;
}

/// Hardware cost proxy: sources + receivers.
inline std::size_t element_count(const AcquisitionConfig& cfg) { return cfg.n_sources + cfg.n_receivers; }
inline std::size_t element_count(std::size_t n_sources, std::size_t n_receivers) { return n_sources + n_receivers; }

/// Fraction of dense (source, receiver) pairs missing from the sparse configuration.
inline double sparsity_vs(std::size_t sparse_sources, std::size_t sparse_receivers, std::size_t dense_sources,
                          std::size_t dense_receivers) {
  if (sparse_sources == 0 || sparse_receivers == 0 || dense_sources % sparse_sources != 0 ||
      dense_receivers % sparse_receivers != 0) {
    throw ConfigError("sparse counts (" + std::to_string(sparse_sources) + ", " + std::to_string(sparse_receivers) +
                      ") do not divide dense counts (" + std::to_string(dense_sources) + ", " +
                      std::to_string(dense_receivers) + ")");
  }
  const double sparse_pairs = static_cast<double>(sparse_sources * sparse_receivers);
  const double dense_pairs = static_cast<double>(dense_sources * dense_receivers);
  return 1.0 - sparse_pairs / dense_pairs;
}

inline double sparsity_vs(const AcquisitionConfig& sparse, const AcquisitionConfig& dense) {
  return sparsity_vs(sparse.n_sources, sparse.n_receivers, dense.n_sources, dense.n_receivers);
}

/// Dense ring slots occupied by a sparse configuration: 0, k, 2k, ... with k = dense / sparse.
inline std::vector<std::size_t> subsample_indices(std::size_t dense_count, std::size_t sparse_count) {
  if (sparse_count == 0 || dense_count % sparse_count != 0) {
    throw ConfigError("sparse count " + std::to_string(sparse_count) + " does not divide dense count " +
                      std::to_string(dense_count));
  }
  const std::size_t stride = dense_count / sparse_count;
  std::vector<std::size_t> idx(sparse_count);
  for (std::size_t i = 0; i < sparse_count; ++i) idx[i] = i * stride;
  return idx;
}

}  // namespace apsusct
