#pragma once

// Experiment configuration: one JSON document drives every stage.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "apsusct/errors.hpp"
#include "apsusct/geometry.hpp"
#include "apsusct/phantom.hpp"
#include "apsusct/wave_sim.hpp"

namespace apsusct::pipeline {

using json = nlohmann::ordered_json;

struct Density {
  std::size_t sources = 8;
  std::size_t receivers = 32;
  bool operator==(const Density&) const = default;
};

struct GridConfig {
  std::size_t n = 32;
  double f_peak = 0.3e6;
  double points_per_wavelength = 8.0;
  double dt = 2.0e-7;
  std::size_t time_steps = 128;
  std::size_t sponge_width = 20;
  double sponge_strength = 0.0015;
  double ring_margin_cells = 3.0;
};

struct WaveStageConfig {
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t base_channels = 4;
};

struct FwiStageConfig {
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t batch_size = 1;
  std::size_t base_channels = 8;
  std::size_t encoded_channels = 4;
  bool random_mask = true;
  bool se = true;
  /// Training input: "upscaled" (APS-wave output), "dense" (simulated labels) or "sparse" (raw).
  std::string input = "upscaled";
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t phantom_count = 40;
  PhantomSpec phantom;  // n and dx are taken from the grid section
  GridConfig grid;
  Density dense;
  Density sparse{8, 8};
  WaveStageConfig wave;
  FwiStageConfig fwi;
  double held_out_fraction = 0.2;
  std::size_t workers = 1;

  double dx() const { return dx_for_frequency(grid.f_peak, phantom.c_min, grid.points_per_wavelength); }

  PhantomSpec phantom_spec() const {
    PhantomSpec p = phantom;
    p.n = grid.n;
    p.dx = dx();
    p.seed = seed;
    return p;
  }

  SimGrid sim_grid() const {
    return SimGrid::make(grid.n, dx(), grid.dt, grid.time_steps, phantom.c_max, grid.sponge_width,
                         grid.sponge_strength);
  }

  RingGeometry ring() const { return RingGeometry::centered(grid.n, dx(), grid.ring_margin_cells); }

  AcquisitionConfig acquisition(const Density& d) const {
    return {d.sources, d.receivers, ring(), grid.time_steps, grid.dt};
  }
  AcquisitionConfig dense_acquisition() const { return acquisition(dense); }
  AcquisitionConfig sparse_acquisition() const { return acquisition(sparse); }

  RickerSource wavelet() const { return RickerSource::with_default_delay(grid.f_peak); }

  bool upscaling() const { return !(sparse == dense); }

  std::size_t test_count() const {
    const auto t = static_cast<std::size_t>(std::floor(held_out_fraction * static_cast<double>(phantom_count) + 1e-9));
    return std::max<std::size_t>(t, 1);
  }
  std::size_t train_count() const { return phantom_count - test_count(); }

  void validate() const {
    if (phantom_count < 2) throw ConfigError("experiment needs at least 2 phantoms");
    if (!(held_out_fraction > 0.0 && held_out_fraction < 1.0)) throw ConfigError("held_out_fraction must be in (0, 1)");
    if (train_count() == 0) throw ConfigError("held-out split leaves no training phantoms");
    if (workers == 0) throw ConfigError("workers must be >= 1");
    phantom_spec().validate();
    sim_grid();
    dense_acquisition().validate();
    sparse_acquisition().validate();
    subsample_indices(dense.sources, sparse.sources);
    subsample_indices(dense.receivers, sparse.receivers);
    if (fwi.input != "upscaled" && fwi.input != "dense" && fwi.input != "sparse") {
      throw ConfigError("fwi.input must be one of upscaled, dense, sparse (got '" + fwi.input + "')");
    }
    if (wave.epochs == 0 && upscaling() && fwi.input == "upscaled") {
      throw ConfigError("wave.epochs = 0 leaves the upscaler untrained");
    }
  }
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::reject_unknown(j, {"seed", "phantoms", "grid", "acquisition", "wave", "fwi", "evaluation", "workers"},
                         "config");
  read(j, "seed", c.seed, "config");
  read(j, "workers", c.workers, "config");
  if (j.contains("phantoms")) {
    const json& p = j["phantoms"];
    detail::reject_unknown(p,
                           {"count", "background_speed", "c_min", "c_max", "fat_speed", "body_radius_fraction",
                            "inclusion_count_min", "inclusion_count_max", "dense_fraction", "fatty_fraction"},
                           "phantoms");
    read(p, "count", c.phantom_count, "phantoms");
    read(p, "background_speed", c.phantom.background_speed, "phantoms");
    read(p, "c_min", c.phantom.c_min, "phantoms");
    read(p, "c_max", c.phantom.c_max, "phantoms");
    read(p, "fat_speed", c.phantom.fat_speed, "phantoms");
    read(p, "body_radius_fraction", c.phantom.body_radius_fraction, "phantoms");
    read(p, "inclusion_count_min", c.phantom.inclusion_count_min, "phantoms");
    read(p, "inclusion_count_max", c.phantom.inclusion_count_max, "phantoms");
    read(p, "dense_fraction", c.phantom.dense_fraction, "phantoms");
    read(p, "fatty_fraction", c.phantom.fatty_fraction, "phantoms");
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    detail::reject_unknown(g,
                           {"n", "f_peak", "points_per_wavelength", "dt", "time_steps", "sponge_width",
                            "sponge_strength", "ring_margin_cells"},
                           "grid");
    read(g, "n", c.grid.n, "grid");
    read(g, "f_peak", c.grid.f_peak, "grid");
    read(g, "points_per_wavelength", c.grid.points_per_wavelength, "grid");
    read(g, "dt", c.grid.dt, "grid");
    read(g, "time_steps", c.grid.time_steps, "grid");
    read(g, "sponge_width", c.grid.sponge_width, "grid");
    read(g, "sponge_strength", c.grid.sponge_strength, "grid");
    read(g, "ring_margin_cells", c.grid.ring_margin_cells, "grid");
  }
  if (j.contains("acquisition")) {
    const json& a = j["acquisition"];
    detail::reject_unknown(a, {"dense", "sparse"}, "acquisition");
    for (auto [key, target] : {std::pair{"dense", &c.dense}, {"sparse", &c.sparse}}) {
      if (!a.contains(key)) continue;
      const std::string where = std::string("acquisition.") + key;
      detail::reject_unknown(a[key], {"sources", "receivers"}, where);
      read(a[key], "sources", target->sources, where);
      read(a[key], "receivers", target->receivers, where);
    }
  }
  if (j.contains("wave")) {
    const json& w = j["wave"];
    detail::reject_unknown(w, {"epochs", "lr", "base_channels"}, "wave");
    read(w, "epochs", c.wave.epochs, "wave");
    read(w, "lr", c.wave.lr, "wave");
    read(w, "base_channels", c.wave.base_channels, "wave");
  }
  if (j.contains("fwi")) {
    const json& f = j["fwi"];
    detail::reject_unknown(
        f, {"epochs", "lr", "batch_size", "base_channels", "encoded_channels", "random_mask", "se", "input"}, "fwi");
    read(f, "epochs", c.fwi.epochs, "fwi");
    read(f, "lr", c.fwi.lr, "fwi");
    read(f, "batch_size", c.fwi.batch_size, "fwi");
    read(f, "base_channels", c.fwi.base_channels, "fwi");
    read(f, "encoded_channels", c.fwi.encoded_channels, "fwi");
    read(f, "random_mask", c.fwi.random_mask, "fwi");
    read(f, "se", c.fwi.se, "fwi");
    read(f, "input", c.fwi.input, "fwi");
  }
  if (j.contains("evaluation")) {
    detail::reject_unknown(j["evaluation"], {"held_out_fraction"}, "evaluation");
    read(j["evaluation"], "held_out_fraction", c.held_out_fraction, "evaluation");
  }
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  const PhantomSpec& p = c.phantom;
  return json{
      {"seed", c.seed},
      {"phantoms",
       {{"count", c.phantom_count},
        {"background_speed", p.background_speed},
        {"c_min", p.c_min},
        {"c_max", p.c_max},
        {"fat_speed", p.fat_speed},
        {"body_radius_fraction", p.body_radius_fraction},
        {"inclusion_count_min", p.inclusion_count_min},
        {"inclusion_count_max", p.inclusion_count_max},
        {"dense_fraction", p.dense_fraction},
        {"fatty_fraction", p.fatty_fraction}}},
      {"grid",
       {{"n", c.grid.n},
        {"f_peak", c.grid.f_peak},
        {"points_per_wavelength", c.grid.points_per_wavelength},
        {"dt", c.grid.dt},
        {"time_steps", c.grid.time_steps},
        {"sponge_width", c.grid.sponge_width},
        {"sponge_strength", c.grid.sponge_strength},
        {"ring_margin_cells", c.grid.ring_margin_cells}}},
      {"acquisition",
       {{"dense", {{"sources", c.dense.sources}, {"receivers", c.dense.receivers}}},
        {"sparse", {{"sources", c.sparse.sources}, {"receivers", c.sparse.receivers}}}}},
      {"wave", {{"epochs", c.wave.epochs}, {"lr", c.wave.lr}, {"base_channels", c.wave.base_channels}}},
      {"fwi",
       {{"epochs", c.fwi.epochs},
        {"lr", c.fwi.lr},
        {"batch_size", c.fwi.batch_size},
        {"base_channels", c.fwi.base_channels},
        {"encoded_channels", c.fwi.encoded_channels},
        {"random_mask", c.fwi.random_mask},
        {"se", c.fwi.se},
        {"input", c.fwi.input}}},
      {"evaluation", {{"held_out_fraction", c.held_out_fraction}}},
      {"workers", c.workers},
  };
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  c.validate();
  return c;
}

}  // namespace apsusct::pipeline
