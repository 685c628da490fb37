#pragma once

// Pipeline stages. Each stage reads its inputs from the output directory and writes its own
// artifacts there, so any stage can be re-run without the ones before it.
//
//   phantoms   phantoms.apst, phantoms.json
//   simulate   dense.apst, sparse.apst, acquisition.json
//   train-wave upscaler.apst, train_wave.json
//   upscale    upscaled.apst
//   train-fwi  fwi.apst, train_fwi.json
//   evaluate   reconstructions.apst, report.json, metrics.csv
//   tables     table_metrics.csv, table_similarity.csv, table_cost.csv

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "apsusct/aps_fwi.hpp"
#include "apsusct/aps_wave.hpp"
#include "apsusct/io/container.hpp"
#include "apsusct/metrics.hpp"
#include "apsusct/phantom.hpp"
#include "apsusct/pipeline/checkpoint.hpp"
#include "apsusct/pipeline/config.hpp"
#include "apsusct/wave_sim.hpp"

namespace apsusct::pipeline {

namespace fs = std::filesystem;

/// Failure inside a named stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Shortest decimal text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::string index_name(const std::string& prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return prefix + "/" + buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- artifact I/O ----

inline void save_maps(const fs::path& path, const std::vector<SosMap>& maps) {
  std::vector<io::Section> s;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto n = static_cast<std::uint32_t>(maps[i].n);
    s.push_back(io::make_section(index_name("map", i), io::DType::f64, {n, n}, maps[i].values));
  }
  io::write_container(path.string(), s);
}

inline std::vector<SosMap> load_maps(const fs::path& path, double dx) {
  std::vector<SosMap> maps;
  for (const auto& s : io::read_container(path.string())) {
    if (s.extents.size() != 2 || s.extents[0] != s.extents[1]) {
      throw DataError(path.string() + ": section '" + s.name + "' is not a square map");
    }
    SosMap m(s.extents[0], dx, 0.0);
    m.values = s.values;
    maps.push_back(std::move(m));
  }
  return maps;
}

inline void save_cubes(const fs::path& path, const std::vector<WaveformCube>& cubes) {
  std::vector<io::Section> s;
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    const auto& c = cubes[i];
    s.push_back(io::make_section(index_name("cube", i), io::DType::f64,
                                 {static_cast<std::uint32_t>(c.sources), static_cast<std::uint32_t>(c.receivers),
                                  static_cast<std::uint32_t>(c.time)},
                                 c.values));
  }
  io::write_container(path.string(), s);
}

inline std::vector<WaveformCube> load_cubes(const fs::path& path, const AcquisitionConfig& acq) {
  std::vector<WaveformCube> cubes;
  for (const auto& s : io::read_container(path.string())) {
    if (s.extents != std::vector<std::uint32_t>{static_cast<std::uint32_t>(acq.n_sources),
                                                static_cast<std::uint32_t>(acq.n_receivers),
                                                static_cast<std::uint32_t>(acq.time_steps)}) {
      throw DataError(path.string() + ": section '" + s.name + "' does not match the configured acquisition (" +
                      std::to_string(acq.n_sources) + ", " + std::to_string(acq.n_receivers) + ", " +
                      std::to_string(acq.time_steps) + ")");
    }
    WaveformCube c(acq.n_sources, acq.n_receivers, acq.time_steps, acq);
    c.values = s.values;
    cubes.push_back(std::move(c));
  }
  return cubes;
}

template <class V>
std::vector<V> slice(const std::vector<V>& v, std::size_t begin, std::size_t end) {
  if (end > v.size() || begin > end) throw DataError("artifact holds " + std::to_string(v.size()) + " samples, expected at least " + std::to_string(end));
  return std::vector<V>(v.begin() + static_cast<long>(begin), v.begin() + static_cast<long>(end));
}

inline json metric_report_json(const MetricReport& r) {
  json psnr = json::array();
  for (const auto& p : r.psnr) psnr.push_back(p.is_infinite() ? json("inf") : json(p.db()));
  return json{{"ssim_mean", r.ssim_mean},     {"ssim_std", r.ssim_std},   {"psnr_mean", r.psnr_mean},
              {"psnr_std", r.psnr_std},       {"psnr_infinite", r.psnr_infinite},
              {"thresholds", r.thresholds},   {"fractions", r.fractions}, {"ssim", r.ssim},
              {"psnr", psnr}};
}

// ---- stages ----

inline void stage_phantoms(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const PhantomSpec spec = cfg.phantom_spec();
  const auto maps = generate_dataset(spec, cfg.phantom_count, cfg.seed);
  save_maps(out / "phantoms.apst", maps);
  json classes = json::array();
  for (std::size_t i = 0; i < maps.size(); ++i) classes.push_back(to_string(dataset_class(spec, i)));
  write_json(out / "phantoms.json", {{"seed", cfg.seed},
                                     {"count", cfg.phantom_count},
                                     {"n", spec.n},
                                     {"dx", spec.dx},
                                     {"train", cfg.train_count()},
                                     {"test", cfg.test_count()},
                                     {"spec", config_to_json(cfg)["phantoms"]},
                                     {"classes", classes}});
  log << "phantoms: " << maps.size() << " maps of " << spec.n << "x" << spec.n << "\n";
}

inline void stage_simulate(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto maps = load_maps(out / "phantoms.apst", cfg.dx());
  const SimGrid grid = cfg.sim_grid();
  const AcquisitionConfig dense = cfg.dense_acquisition();
  const AcquisitionConfig sparse = cfg.sparse_acquisition();
  std::vector<WaveformCube> dense_cubes;
  std::vector<WaveformCube> sparse_cubes;
  for (const auto& m : maps) {
    dense_cubes.push_back(simulate_acquisition(m, dense, grid, cfg.wavelet(), cfg.workers));
    sparse_cubes.push_back(restrict_cube(dense_cubes.back(), sparse));
  }
  save_cubes(out / "dense.apst", dense_cubes);
  save_cubes(out / "sparse.apst", sparse_cubes);
  auto acq_json = [](const AcquisitionConfig& a) {
    return json{{"n_sources", a.n_sources},   {"n_receivers", a.n_receivers}, {"ring_radius", a.ring.radius},
                {"grid_n", a.ring.grid_n},    {"time_steps", a.time_steps},   {"sample_dt", a.sample_dt},
                {"elements", element_count(a)}};
  };
  write_json(out / "acquisition.json",
             {{"dense", acq_json(dense)}, {"sparse", acq_json(sparse)}, {"sparsity", sparsity_vs(sparse, dense)}});
  log << "simulate: " << maps.size() << " cubes " << dense_cubes.front().dims() << " -> sparse "
      << sparse_cubes.front().dims() << "\n";
}

inline void stage_train_wave(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  if (!cfg.upscaling()) {
    write_json(out / "train_wave.json", {{"skipped", true}, {"reason", "sparse and dense densities are equal"}});
    log << "train-wave: skipped (sparse == dense)\n";
    return;
  }
  const std::size_t n_train = cfg.train_count();
  const auto dense = slice(load_cubes(out / "dense.apst", cfg.dense_acquisition()), 0, n_train);
  const auto sparse = slice(load_cubes(out / "sparse.apst", cfg.sparse_acquisition()), 0, n_train);
  WaveTrainConfig wc;
  wc.epochs = cfg.wave.epochs;
  wc.adam.lr = cfg.wave.lr;
  wc.base_channels = cfg.wave.base_channels;
  wc.seed = cfg.seed;
  const auto model = train_upscaler<float>(sparse, dense, wc);
  save_upscaler(out / "upscaler.apst", model, cfg.wave.base_channels);
  write_json(out / "train_wave.json", {{"skipped", false}, {"loss_history", model.loss_history}});
  log << "train-wave: " << wc.epochs << " epochs, final loss "
      << (model.loss_history.empty() ? 0.0 : model.loss_history.back()) << "\n";
}

inline void stage_upscale(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto sparse = load_cubes(out / "sparse.apst", cfg.sparse_acquisition());
  if (!cfg.upscaling()) {
    save_cubes(out / "upscaled.apst", sparse);
    log << "upscale: densities equal, sparse cubes passed through\n";
    return;
  }
  auto model = load_upscaler<float>((out / "upscaler.apst").string());
  std::vector<WaveformCube> up;
  for (const auto& c : sparse) up.push_back(upscale(model, c, cfg.dense_acquisition(), &log));
  save_cubes(out / "upscaled.apst", up);
  log << "upscale: " << up.size() << " cubes -> " << up.front().dims() << "\n";
}

/// Cubes the FWI stage trains on, per fwi.input.
inline std::vector<WaveformCube> fwi_inputs(const ExperimentConfig& cfg, const fs::path& out) {
  if (cfg.fwi.input == "sparse") return load_cubes(out / "sparse.apst", cfg.sparse_acquisition());
  if (cfg.fwi.input == "dense") return load_cubes(out / "dense.apst", cfg.dense_acquisition());
  return load_cubes(out / "upscaled.apst", cfg.upscaling() ? cfg.dense_acquisition() : cfg.sparse_acquisition());
}

inline FwiTrainConfig fwi_train_config(const ExperimentConfig& cfg) {
  FwiTrainConfig fc;
  fc.epochs = cfg.fwi.epochs;
  fc.adam.lr = cfg.fwi.lr;
  fc.batch_size = cfg.fwi.batch_size;
  fc.base_channels = cfg.fwi.base_channels;
  fc.encoded_channels = cfg.fwi.encoded_channels;
  fc.random_mask = cfg.fwi.random_mask;
  fc.se_enabled = cfg.fwi.se;
  fc.seed = cfg.seed;
  return fc;
}

inline void stage_train_fwi(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const std::size_t n_train = cfg.train_count();
  const auto cubes = slice(fwi_inputs(cfg, out), 0, n_train);
  const auto labels = slice(load_maps(out / "phantoms.apst", cfg.dx()), 0, n_train);
  const auto model = train_fwi<float>(cubes, labels, fwi_train_config(cfg), cfg.phantom.c_min, cfg.phantom.c_max);
  save_fwi((out / "fwi.apst").string(), model);
  write_json(out / "train_fwi.json", {{"input", cfg.fwi.input}, {"loss_history", model.loss_history}});
  log << "train-fwi: " << cfg.fwi.epochs << " epochs on " << cfg.fwi.input << " cubes, final loss "
      << (model.loss_history.empty() ? 0.0 : model.loss_history.back()) << "\n";
}

inline void stage_evaluate(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const std::size_t begin = cfg.train_count();
  const std::size_t end = cfg.phantom_count;
  const double dx = cfg.dx();
  const auto truth = slice(load_maps(out / "phantoms.apst", dx), begin, end);
  const auto dense = slice(load_cubes(out / "dense.apst", cfg.dense_acquisition()), begin, end);
  const auto sparse = slice(load_cubes(out / "sparse.apst", cfg.sparse_acquisition()), begin, end);
  const auto upscaled = slice(
      load_cubes(out / "upscaled.apst", cfg.upscaling() ? cfg.dense_acquisition() : cfg.sparse_acquisition()), begin,
      end);
  auto model = load_fwi<float>((out / "fwi.apst").string());
  const AcquisitionConfig target = cfg.dense_acquisition();

  json report;
  json echo = config_to_json(cfg);
  echo.erase("workers");
  report["config"] = echo;
  report["split"] = {{"train", cfg.train_count()}, {"test", cfg.test_count()}};
  const auto da = cfg.dense_acquisition();
  const auto sa = cfg.sparse_acquisition();
  report["acquisition"] = {{"dense", {da.n_sources, da.n_receivers}},
                           {"sparse", {sa.n_sources, sa.n_receivers}},
                           {"sparsity", sparsity_vs(sa, da)},
                           {"elements_dense", element_count(da)},
                           {"elements_sparse", element_count(sa)}};

  // Waveform similarity against the simulated dense labels.
  json similarity = json::object();
  if (cfg.upscaling()) {
    std::vector<std::pair<std::string, std::vector<WaveformCube>>> methods;
    methods.emplace_back("aps_wave", upscaled);
    std::vector<WaveformCube> near, cubic, zero;
    for (const auto& s : sparse) {
      near.push_back(nearest_interp(s, target));
      cubic.push_back(bicubic_interp(s, target));
      zero.push_back(interleave_zeros(s, target).cube);
    }
    methods.emplace_back("nearest", near);
    methods.emplace_back("bicubic", cubic);
    methods.emplace_back("zero_fill", zero);
    for (const auto& [name, cubes] : methods) {
      std::vector<double> v;
      for (std::size_t i = 0; i < cubes.size(); ++i) v.push_back(cosine_similarity(cubes[i], dense[i]));
      const auto [m, sd] = mean_std(v);
      similarity[name] = {{"mean", m}, {"std", sd}, {"per_sample", v}};
    }
  }
  report["similarity"] = similarity;

  // Reconstructions by the trained inversion net from each candidate input.
  const bool dense_model = model.net.receivers == cfg.dense.receivers && model.encoding.input_sources == cfg.dense.sources;
  std::vector<std::pair<std::string, std::vector<WaveformCube>>> inputs;
  if (cfg.fwi.input == "sparse" || !cfg.upscaling()) {
    inputs.emplace_back("aps", cfg.fwi.input == "sparse" ? sparse : upscaled);
  } else if (dense_model) {
    inputs.emplace_back("aps", upscaled);
    std::vector<WaveformCube> near, cubic;
    for (const auto& s : sparse) {
      near.push_back(nearest_interp(s, target));
      cubic.push_back(bicubic_interp(s, target));
    }
    inputs.emplace_back("nearest", near);
    inputs.emplace_back("bicubic", cubic);
    inputs.emplace_back("dense", dense);
  }
  std::vector<io::Section> recon_sections;
  json metrics = json::object();
  std::ostringstream csv;
  csv << "method,ssim_mean,ssim_std,psnr_mean,psnr_std,psnr_infinite,frac_ssim_gt_0.8,frac_ssim_gt_0.85,frac_ssim_gt_0.9\n";
  for (const auto& [name, cubes] : inputs) {
    std::vector<SosMap> recon;
    for (std::size_t i = 0; i < cubes.size(); ++i) {
      recon.push_back(reconstruct(model, cubes[i], dx, &log));
      const auto n = static_cast<std::uint32_t>(recon.back().n);
      recon_sections.push_back(io::make_section(index_name("recon/" + name, begin + i), io::DType::f64, {n, n},
                                                recon.back().values));
    }
    const MetricReport r = evaluate_maps(recon, truth, cfg.phantom.c_min, cfg.phantom.c_max);
    metrics[name] = metric_report_json(r);
    csv << name << "," << fmt(r.ssim_mean) << "," << fmt(r.ssim_std) << "," << fmt(r.psnr_mean) << ","
        << fmt(r.psnr_std) << "," << r.psnr_infinite;
    for (double f : r.fractions) csv << "," << fmt(f);
    csv << "\n";
  }
  report["fwi"] = {{"input", cfg.fwi.input}, {"se", cfg.fwi.se}};
  report["metrics"] = metrics;
  io::write_container((out / "reconstructions.apst").string(), recon_sections);
  write_json(out / "report.json", report);
  write_text(out / "metrics.csv", csv.str());
  log << "evaluate: " << truth.size() << " held-out maps";
  if (metrics.contains("aps")) log << ", SSIM " << metrics["aps"]["ssim_mean"].get<double>();
  log << "\n";
}

// ---- tables ----

struct CostRow {
  Density dense;
  Density sparse;
  std::optional<double> baseline_ssim;
  std::optional<double> aps_ssim;
};

/// Resource-performance table: per row, the dense baseline and the upscaled sparse
/// configuration, their element counts, SSIM degradation and hardware reduction.
inline std::string emit_cost_table(const std::vector<CostRow>& rows) {
  std::ostringstream os;
  os << "d_raw,baseline_ssim,baseline_elements,aps_config,aps_ssim,aps_elements,ssim_degradation,hw_reduction\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!r.baseline_ssim || !r.aps_ssim) throw DataError("cost table row " + std::to_string(i) + " is missing a metric report");
    const std::size_t dense_el = element_count(r.dense.sources, r.dense.receivers);
    const std::size_t aps_el = element_count(r.sparse.sources, r.sparse.receivers);
    auto pair = [](const Density& d) {
      return "(" + std::to_string(d.sources) + ";" + std::to_string(d.receivers) + ")";
    };
    os << pair(r.dense) << "," << fmt(*r.baseline_ssim) << "," << dense_el << "," << pair(r.sparse) << "->"
       << pair(r.dense) << "," << fmt(*r.aps_ssim) << "," << aps_el << "," << fmt(*r.baseline_ssim - *r.aps_ssim)
       << "," << fmt(static_cast<double>(dense_el) / static_cast<double>(aps_el)) << "\n";
  }
  return os.str();
}

inline void stage_tables(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const json report = read_json(out / "report.json");
  const json& metrics = report.at("metrics");
  std::ostringstream m;
  m << "method,ssim_mean,ssim_std,psnr_mean,psnr_std,frac_ssim_gt_0.8,frac_ssim_gt_0.85,frac_ssim_gt_0.9\n";
  for (const auto& [name, r] : metrics.items()) {
    m << name << "," << fmt(r["ssim_mean"].get<double>()) << "," << fmt(r["ssim_std"].get<double>()) << ","
      << fmt(r["psnr_mean"].get<double>()) << "," << fmt(r["psnr_std"].get<double>());
    for (const auto& f : r["fractions"]) m << "," << fmt(f.get<double>());
    m << "\n";
  }
  write_text(out / "table_metrics.csv", m.str());

  std::ostringstream s;
  s << "method,cosine_mean,cosine_std\n";
  for (const auto& [name, r] : report.at("similarity").items()) {
    s << name << "," << fmt(r["mean"].get<double>()) << "," << fmt(r["std"].get<double>()) << "\n";
  }
  write_text(out / "table_similarity.csv", s.str());

  CostRow row{cfg.dense, cfg.sparse, std::nullopt, std::nullopt};
  if (metrics.contains("dense")) row.baseline_ssim = metrics["dense"]["ssim_mean"].get<double>();
  if (metrics.contains("aps")) row.aps_ssim = metrics["aps"]["ssim_mean"].get<double>();
  if (row.baseline_ssim && row.aps_ssim) {
    write_text(out / "table_cost.csv", emit_cost_table({row}));
  } else {
    log << "tables: no dense-input baseline in the report, table_cost.csv not written\n";
  }
  log << "tables: written to " << out.string() << "\n";
}

// ---- orchestration ----

using StageFn = void (*)(const ExperimentConfig&, const fs::path&, std::ostream&);

inline const std::vector<std::pair<std::string, StageFn>>& stage_table() {
  static const std::vector<std::pair<std::string, StageFn>> stages{
      {"phantoms", stage_phantoms},   {"simulate", stage_simulate},   {"train-wave", stage_train_wave},
      {"upscale", stage_upscale},     {"train-fwi", stage_train_fwi}, {"evaluate", stage_evaluate},
      {"tables", stage_tables}};
  return stages;
}

/// Runs one stage; any failure is rethrown as StageError naming it.
inline void run_stage(const std::string& name, const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  for (const auto& [stage, fn] : stage_table()) {
    if (stage != name) continue;
    fs::create_directories(out);
    try {
      fn(cfg, out, log);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    return;
  }
  throw ConfigError("unknown stage '" + name + "'");
}

/// All stages in order. pipeline_status.json records completed stages and, on failure, the
/// failing stage; outputs of later stages are then absent or stale.
inline void run_pipeline(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  cfg.validate();
  fs::create_directories(out);
  json status{{"completed", json::array()}, {"failed", nullptr}, {"partial", false}};
  write_json(out / "pipeline_status.json", status);
  for (const auto& [name, fn] : stage_table()) {
    try {
      run_stage(name, cfg, out, log);
    } catch (const StageError& e) {
      status["failed"] = {{"stage", name}, {"message", e.what()}};
      status["partial"] = true;
      write_json(out / "pipeline_status.json", status);
      throw;
    }
    status["completed"].push_back(name);
    write_json(out / "pipeline_status.json", status);
  }
}

}  // namespace apsusct::pipeline
