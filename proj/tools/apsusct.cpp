// Command-line driver: one subcommand per pipeline stage plus `pipeline` for all of them.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "apsusct/pipeline/stages.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::size_t> workers;
};

apsusct::pipeline::ExperimentConfig resolve(const CommonArgs& a) {
  using namespace apsusct::pipeline;
  ExperimentConfig cfg = a.config.empty() ? config_from_json(json::object()) : load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.workers) cfg.workers = *a.workers;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive sparse ultrasound CT: waveform upscaling and learned inversion"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"phantoms", "generate speed-of-sound phantoms"},
      {"simulate", "simulate dense waveforms and restrict them to the sparse layout"},
      {"train-wave", "train the waveform upscaler on the training split"},
      {"upscale", "upscale every sparse cube to the dense layout"},
      {"train-fwi", "train the inversion network"},
      {"evaluate", "evaluate reconstructions and waveform similarity on the held-out split"},
      {"tables", "write result tables from the evaluation report"},
      {"pipeline", "run every stage in order"},
  };

  CommonArgs args;
  std::string chosen;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", args.config, "experiment JSON (defaults apply when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--seed", args.seed, "override the configured seed");
    sub->add_option("--out", args.out, "artifact directory")->capture_default_str();
    sub->add_option("--workers", args.workers, "simulation threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    sub->callback([&chosen, n = name] { chosen = n; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(args);
    if (chosen == "pipeline") {
      apsusct::pipeline::run_pipeline(cfg, args.out, std::cerr);
    } else {
      apsusct::pipeline::run_stage(chosen, cfg, args.out, std::cerr);
    }
  } catch (const apsusct::pipeline::StageError& e) {
    std::cerr << "apsusct " << chosen << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "apsusct " << chosen << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
