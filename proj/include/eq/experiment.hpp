#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "eq/channels.hpp"
#include "eq/dse.hpp"
#include "eq/hwmodel.hpp"
#include "eq/quantization.hpp"
#include "eq/training.hpp"

namespace eq {

/// Fully-resolved experiment description. Parsed from a JSON document that
/// is validated against the schema (unknown keys rejected with their path).
struct ExperimentConfig {
  ChannelConfig channel = ProakisBConfig{};
  EqualizerSpec model;
  TrainConfig training;
  QatConfig quantization;
  std::string dse_preset = "desk";
  TimingParams hardware;
  int dop = 225;
  double dsp_avail = 9648;
  double t_req_baud = 40e9;
  std::vector<double> t_req_list;       // lutgen entries, samples/s
  std::vector<long> sweep_l_inst;       // timing sweep
  std::vector<int> sweep_n_instances;
  long sim_blocks = 64;
  Eigen::Index n_symbols = 100000;      // simulate / hwsim input size
  std::string checkpoint;               // evaluate / hwsim input
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  nlohmann::ordered_json resolved;  // canonical document, written next to results
  std::uint64_t config_hash() const;
};

nlohmann::ordered_json default_config_json();
nlohmann::ordered_json load_config_file(const std::string& path);

/// Dotted-path override, e.g. "training.lr=0.0005". Values parse as JSON
/// when possible and fall back to strings.
void apply_override(nlohmann::ordered_json& doc, const std::string& assignment);

/// Validate against the schema and resolve defaults.
ExperimentConfig parse_experiment_config(nlohmann::ordered_json doc);

/// Comment block embedded at the top of every CSV artifact.
std::string provenance_comment(const ExperimentConfig& cfg, std::uint64_t seed);

/// Executes one subcommand; returns the process exit status.
int run_subcommand(const std::string& name, ExperimentConfig& cfg, int jobs);

}  // namespace eq
