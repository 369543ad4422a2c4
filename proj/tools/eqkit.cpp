#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "eq/errors.hpp"
#include "eq/experiment.hpp"
#include "eq/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"CNN channel-equalizer toolkit: simulation, training, "
               "design-space exploration, quantization and the parallel "
               "hardware model"};
  app.set_version_flag("--version", eq::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = int(std::thread::hardware_concurrency());
  std::string preset;

  const std::vector<std::string> names = {"simulate", "train", "evaluate",
                                          "quantize", "dse",   "hwsim",
                                          "timing",   "lutgen", "dump"};
  for (const auto& name : names) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--set", overrides, "dotted-path override, key=value");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "replace the seed list with one seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--jobs", jobs, "worker pool size");
    sub->add_option("--preset", preset, "dse preset (desk|paper)");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::ordered_json doc = config_path.empty()
                                     ? nlohmann::ordered_json::object()
                                     : eq::load_config_file(config_path);
    for (const auto& o : overrides) eq::apply_override(doc, o);
    if (!out_dir.empty()) doc["output"]["dir"] = out_dir;
    if (seed_given) doc["seeds"] = {seed};
    if (!preset.empty()) doc["dse"]["preset"] = preset;

    eq::ExperimentConfig cfg = eq::parse_experiment_config(std::move(doc));
    if (out_dir.empty() && cfg.out_dir.front() != '/') {
      if (const char* root = std::getenv("EQKIT_OUT_ROOT"))
        cfg.out_dir = std::string(root) + "/" + cfg.out_dir;
    }
    return eq::run_subcommand(app.get_subcommands().front()->get_name(), cfg,
                              jobs);
  } catch (const eq::SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const eq::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
