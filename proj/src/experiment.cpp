#include "eq/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "eq/checkpoint.hpp"
#include "eq/errors.hpp"
#include "eq/io_detail.hpp"

namespace eq {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void check_keys(const ordered_json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw SchemaError(path + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw SchemaError(path + "." + key + ": unknown key");
  }
}

template <typename T>
T get_or(const ordered_json& obj, const char* key, T fallback,
         const std::string& path) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(path + "." + key + ": wrong type");
  }
}

double get_snr(const ordered_json& obj, double fallback, const std::string& path) {
  if (!obj.contains("snr_db")) return fallback;
  const auto& v = obj.at("snr_db");
  if (v.is_string() && v.get<std::string>() == "inf")
    return std::numeric_limits<double>::infinity();
  if (v.is_number()) return v.get<double>();
  throw SchemaError(path + ".snr_db: expected a number or \"inf\"");
}

}  // namespace

ordered_json default_config_json() {
  ordered_json j;
  j["channel"] = {{"type", "proakis_b"}, {"snr_db", 20.0},   {"n_os", 2},
                  {"rc_rolloff", 0.25},  {"rc_span", 16}};
  j["model"] = {{"family", "cnn"},       {"layers", 3},           {"kernel", 9},
                {"channels", 5},         {"parallel_symbols", 8}, {"padding", 10},
                {"bias", false},         {"taps", 57},
                {"volterra_taps", {9, 3, 3}}};
  j["training"] = {{"iterations", 10000},     {"lr", 0.001},
                   {"batch_symbols", 2048},   {"eval_every", 500},
                   {"eval_symbols", 50000},   {"final_eval_symbols", 1000000}};
  j["quantization"] = {{"qlf", 0.0005},     {"phase1_end", 2000},
                       {"phase2_end", 10000}, {"total_iters", 15000},
                       {"width_lr_scale", 10.0}};
  j["dse"] = {{"preset", "desk"}};
  j["hardware"] = {{"n_instances", 64},
                   {"f_clk_hz", 200e6},
                   {"l_inst", 7320},
                   {"o_act_override", -1},
                   {"dop", 225},
                   {"dsp_avail", 9648},
                   {"t_req_baud", 40e9},
                   {"t_req_list", ordered_json::array()},
                   {"sweep_l_inst", ordered_json::array()},
                   {"sweep_n_instances", ordered_json::array()},
                   {"sim_blocks", 64}};
  j["simulate"] = {{"n_symbols", 100000}};
  j["evaluate"] = {{"checkpoint", ""}};
  j["output"] = {{"dir", "out"}};
  j["seeds"] = {1, 2, 3};
  return j;
}

ordered_json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

void apply_override(ordered_json& doc, const std::string& assignment) {
  const auto eq_pos = assignment.find('=');
  if (eq_pos == std::string::npos)
    throw UsageError("--set expects key=value, got " + assignment);
  const std::string key = assignment.substr(0, eq_pos);
  const std::string value = assignment.substr(eq_pos + 1);

  ordered_json* node = &doc;
  size_t start = 0;
  for (;;) {
    const size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw UsageError("--set: empty key segment in " + key);
    if (dot == std::string::npos) {
      try {
        (*node)[part] = ordered_json::parse(value);
      } catch (const nlohmann::json::exception&) {
        (*node)[part] = value;
      }
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::uint64_t ExperimentConfig::config_hash() const {
  return detail::fnv1a(resolved.dump());
}

ExperimentConfig parse_experiment_config(ordered_json doc) {
  check_keys(doc, "config",
             {"channel", "model", "training", "quantization", "dse", "hardware",
              "simulate", "evaluate", "output", "seeds"});
  ExperimentConfig cfg;

  // channel
  ordered_json ch = doc.value("channel", ordered_json::object());
  const std::string type = get_or<std::string>(ch, "type", "proakis_b", "channel");
  if (type == "proakis_b") {
    check_keys(ch, "channel", {"type", "snr_db", "n_os", "rc_rolloff", "rc_span"});
    ProakisBConfig c;
    c.snr_db = get_snr(ch, 20.0, "channel");
    c.n_os = get_or(ch, "n_os", 2, "channel");
    c.rc_rolloff = get_or(ch, "rc_rolloff", 0.25, "channel");
    c.rc_span = get_or(ch, "rc_span", 16, "channel");
    cfg.channel = c;
  } else if (type == "imdd_surrogate") {
    check_keys(ch, "channel",
               {"type", "snr_db", "n_os", "dispersion_ps_per_nm", "symbol_rate_hz",
                "rrc_rolloff", "rrc_span", "bias", "wavelength_nm"});
    ImddSurrogateConfig c;
    c.snr_db = get_snr(ch, 24.0, "channel");
    c.n_os = get_or(ch, "n_os", 2, "channel");
    c.dispersion_ps_per_nm = get_or(ch, "dispersion_ps_per_nm", 504.0, "channel");
    c.symbol_rate_hz = get_or(ch, "symbol_rate_hz", 40e9, "channel");
    c.rrc_rolloff = get_or(ch, "rrc_rolloff", 0.25, "channel");
    c.rrc_span = get_or(ch, "rrc_span", 16, "channel");
    c.bias = get_or(ch, "bias", 1.1, "channel");
    c.wavelength_nm = get_or(ch, "wavelength_nm", 1550.0, "channel");
    cfg.channel = c;
  } else {
    throw SchemaError("channel.type: unknown channel " + type);
  }

  // model
  ordered_json mo = doc.value("model", ordered_json::object());
  check_keys(mo, "model",
             {"family", "layers", "kernel", "channels", "parallel_symbols",
              "padding", "bias", "taps", "volterra_taps"});
  const std::string family = get_or<std::string>(mo, "family", "cnn", "model");
  if (family == "cnn") {
    cfg.model.family = EqualizerSpec::Family::cnn;
    cfg.model.cnn.layers = get_or(mo, "layers", 3, "model");
    cfg.model.cnn.kernel = get_or(mo, "kernel", 9, "model");
    cfg.model.cnn.channels = get_or(mo, "channels", 5, "model");
    cfg.model.cnn.parallel_symbols = get_or(mo, "parallel_symbols", 8, "model");
    cfg.model.cnn.padding = get_or(mo, "padding", 10, "model");
    cfg.model.cnn.bias = get_or(mo, "bias", false, "model");
    cfg.model.cnn.n_os = channel_n_os(cfg.channel);
  } else if (family == "fir") {
    cfg.model.family = EqualizerSpec::Family::fir;
    cfg.model.fir_taps = get_or(mo, "taps", 57, "model");
  } else if (family == "volterra") {
    cfg.model.family = EqualizerSpec::Family::volterra;
    auto taps = get_or<std::vector<int>>(mo, "volterra_taps", {9, 3, 3}, "model");
    if (taps.size() != 3)
      throw SchemaError("model.volterra_taps: expected three entries");
    cfg.model.volterra_taps = {taps[0], taps[1], taps[2]};
  } else {
    throw SchemaError("model.family: unknown family " + family);
  }

  // training
  ordered_json tr = doc.value("training", ordered_json::object());
  check_keys(tr, "training",
             {"iterations", "lr", "batch_symbols", "eval_every", "eval_symbols",
              "final_eval_symbols", "eval_seed"});
  cfg.training.iterations = get_or(tr, "iterations", 10000, "training");
  cfg.training.lr = get_or(tr, "lr", 0.001, "training");
  cfg.training.batch_symbols = get_or(tr, "batch_symbols", 2048, "training");
  cfg.training.eval_every = get_or(tr, "eval_every", 500, "training");
  cfg.training.eval_symbols =
      get_or<long>(tr, "eval_symbols", 50000, "training");
  cfg.training.final_eval_symbols =
      get_or<long>(tr, "final_eval_symbols", 1000000, "training");
  cfg.training.eval_seed = get_or<std::uint64_t>(
      tr, "eval_seed", cfg.training.eval_seed, "training");

  // quantization
  ordered_json qu = doc.value("quantization", ordered_json::object());
  check_keys(qu, "quantization",
             {"qlf", "phase1_end", "phase2_end", "total_iters", "width_lr_scale"});
  cfg.quantization.qlf = get_or(qu, "qlf", 0.0005, "quantization");
  cfg.quantization.phase1_end = get_or(qu, "phase1_end", 2000, "quantization");
  cfg.quantization.phase2_end = get_or(qu, "phase2_end", 10000, "quantization");
  cfg.quantization.total_iters = get_or(qu, "total_iters", 15000, "quantization");
  cfg.quantization.width_lr_scale =
      get_or(qu, "width_lr_scale", 10.0, "quantization");
  cfg.quantization.base = cfg.training;

  // dse
  ordered_json ds = doc.value("dse", ordered_json::object());
  check_keys(ds, "dse", {"preset"});
  cfg.dse_preset = get_or<std::string>(ds, "preset", "desk", "dse");
  if (cfg.dse_preset != "desk" && cfg.dse_preset != "paper")
    throw SchemaError("dse.preset: expected \"desk\" or \"paper\"");

  // hardware
  ordered_json hw = doc.value("hardware", ordered_json::object());
  check_keys(hw, "hardware",
             {"n_instances", "f_clk_hz", "l_inst", "o_act_override", "dop",
              "dsp_avail", "t_req_baud", "t_req_list", "sweep_l_inst",
              "sweep_n_instances", "sim_blocks"});
  cfg.hardware.n_instances = get_or(hw, "n_instances", 64, "hardware");
  cfg.hardware.f_clk_hz = get_or(hw, "f_clk_hz", 200e6, "hardware");
  cfg.hardware.l_inst = get_or<long>(hw, "l_inst", 7320, "hardware");
  cfg.hardware.o_act_override =
      get_or<long>(hw, "o_act_override", -1, "hardware");
  cfg.dop = get_or(hw, "dop", 225, "hardware");
  cfg.dsp_avail = get_or(hw, "dsp_avail", 9648.0, "hardware");
  cfg.t_req_baud = get_or(hw, "t_req_baud", 40e9, "hardware");
  cfg.t_req_list = get_or<std::vector<double>>(hw, "t_req_list", {}, "hardware");
  cfg.sweep_l_inst = get_or<std::vector<long>>(hw, "sweep_l_inst", {}, "hardware");
  cfg.sweep_n_instances =
      get_or<std::vector<int>>(hw, "sweep_n_instances", {}, "hardware");
  cfg.sim_blocks = get_or<long>(hw, "sim_blocks", 64, "hardware");
  if (cfg.model.family == EqualizerSpec::Family::cnn) {
    cfg.hardware.parallel_symbols = cfg.model.cnn.parallel_symbols;
    cfg.hardware.n_os = cfg.model.cnn.n_os;
    cfg.hardware.kernel = cfg.model.cnn.kernel;
    cfg.hardware.layers = cfg.model.cnn.layers;
    cfg.hardware.channels = cfg.model.cnn.channels;
  }

  // simulate / evaluate / output / seeds
  ordered_json si = doc.value("simulate", ordered_json::object());
  check_keys(si, "simulate", {"n_symbols"});
  cfg.n_symbols = get_or<long>(si, "n_symbols", 100000, "simulate");
  ordered_json ev = doc.value("evaluate", ordered_json::object());
  check_keys(ev, "evaluate", {"checkpoint"});
  cfg.checkpoint = get_or<std::string>(ev, "checkpoint", "", "evaluate");
  ordered_json ou = doc.value("output", ordered_json::object());
  check_keys(ou, "output", {"dir"});
  cfg.out_dir = get_or<std::string>(ou, "dir", "out", "output");
  if (doc.contains("seeds")) {
    if (!doc["seeds"].is_array() || doc["seeds"].empty())
      throw SchemaError("seeds: expected a non-empty array");
    cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  }
  cfg.training.seeds = cfg.seeds;
  cfg.quantization.base.seeds = cfg.seeds;

  // Canonical resolved document: defaults merged with the input.
  ordered_json resolved = default_config_json();
  for (const auto& [section, value] : doc.items()) {
    if (value.is_object())
      for (const auto& [key, v] : value.items()) resolved[section][key] = v;
    else
      resolved[section] = value;
  }
  cfg.resolved = std::move(resolved);
  return cfg;
}

std::string provenance_comment(const ExperimentConfig& cfg, std::uint64_t seed) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(cfg.config_hash()));
  std::string s;
  s += "# tool_version=" + std::string(kToolVersion) + "\n";
  s += "# config_hash=" + std::string(hash) + "\n";
  s += "# seed=" + std::to_string(seed) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Subcommands.

namespace {

void write_resolved_config(const ExperimentConfig& cfg) {
  std::ofstream out(fs::path(cfg.out_dir) / "resolved_config.json");
  out << cfg.resolved.dump(2) << "\n";
}

CheckpointMeta make_meta(const ExperimentConfig& cfg, std::uint64_t seed) {
  CheckpointMeta meta;
  meta.seed = seed;
  meta.config_hash = cfg.config_hash();
  meta.extra["channel"] = detail::channel_to_json(cfg.channel);
  return meta;
}

int cmd_simulate(ExperimentConfig& cfg) {
  Dataset ds = make_dataset(cfg.channel, cfg.n_symbols, cfg.seeds[0]);
  const fs::path dir(cfg.out_dir);
  save_dataset((dir / "dataset.bin").string(), ds, cfg.channel);
  export_dataset_csv((dir / "dataset.csv").string(), ds);
  std::cout << "wrote " << (dir / "dataset.bin").string() << " ("
            << ds.symbols.size() << " symbols)\n";
  return 0;
}

void write_training_log(const std::string& path, const ExperimentConfig& cfg,
                        const TrainResult& r) {
  std::ofstream out(path);
  out << provenance_comment(cfg, r.seed);
  out << "iteration,loss,eval_ber,wall_time_s\n";
  size_t ck = 0;
  for (Eigen::Index it = 0; it < r.loss_trace.size(); ++it) {
    const int iteration = int(it) + 1;
    out << iteration << ',' << detail::fmt(r.loss_trace[it]);
    if (ck < r.ber_trace.size() && r.ber_trace[ck].first == iteration) {
      out << ',' << detail::fmt(r.ber_trace[ck].second) << ','
          << detail::fmt(r.checkpoint_seconds[ck]);
      ++ck;
    } else {
      out << ",,";
    }
    out << '\n';
  }
}

int cmd_train(ExperimentConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  WorstOfN result = train_worst_of_n(cfg.model, cfg.channel, cfg.training);
  std::ofstream summary(dir / "train_summary.csv");
  summary << provenance_comment(cfg, cfg.seeds[0]);
  summary << "seed,final_ber,diverged,checkpoint\n";
  for (const auto& run : result.runs) {
    const std::string name = "ckpt_" + cfg.model.id() + "_seed" +
                             std::to_string(run.seed) + ".bin";
    save_checkpoint((dir / name).string(), run.model, make_meta(cfg, run.seed));
    write_training_log(
        (dir / ("train_log_seed" + std::to_string(run.seed) + ".csv")).string(),
        cfg, run);
    summary << run.seed << ',' << detail::fmt(run.final_ber) << ','
            << (run.diverged ? 1 : 0) << ',' << name << '\n';
  }
  std::cout << cfg.model.id() << ": worst-of-" << result.runs.size()
            << " BER = " << result.worst_ber << "\n";
  return 0;
}

int cmd_evaluate(ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty())
    throw UsageError("evaluate: set evaluate.checkpoint in the config");
  Checkpoint ck = load_checkpoint(cfg.checkpoint);
  const double b = evaluate_ber(ck.model, cfg.channel,
                                cfg.training.final_eval_symbols,
                                cfg.training.eval_seed + 1);
  const fs::path dir(cfg.out_dir);
  std::ofstream out(dir / "evaluate.csv");
  out << provenance_comment(cfg, ck.meta.seed);
  out << "checkpoint,symbols,ber\n";
  out << cfg.checkpoint << ',' << cfg.training.final_eval_symbols << ','
      << detail::fmt(b) << '\n';
  std::cout << "BER = " << b << "\n";
  return 0;
}

int cmd_quantize(ExperimentConfig& cfg) {
  if (cfg.model.family != EqualizerSpec::Family::cnn)
    throw UsageError("quantize: only the cnn family is quantized");
  const fs::path dir(cfg.out_dir);
  QatResult result =
      qat_train(cfg.model.cnn, cfg.channel, cfg.quantization, cfg.seeds[0]);
  if (result.diverged) {
    std::cerr << "quantize: training diverged\n";
    return 1;
  }

  std::ofstream trace(dir / "width_trace.csv");
  trace << provenance_comment(cfg, cfg.seeds[0]);
  trace << "iteration,phase";
  for (int l = 0; l < cfg.model.cnn.layers; ++l)
    trace << ",w_int_l" << l << ",w_frac_l" << l << ",a_int_l" << l
          << ",a_frac_l" << l;
  trace << ",mean_bp,mean_ba,loss,ber\n";
  for (const auto& row : result.trace) {
    trace << row.iteration << ',' << row.phase;
    for (int l = 0; l < cfg.model.cnn.layers; ++l)
      trace << ',' << detail::fmt(row.weight_int[size_t(l)]) << ','
            << detail::fmt(row.weight_frac[size_t(l)]) << ','
            << detail::fmt(row.act_int[size_t(l)]) << ','
            << detail::fmt(row.act_frac[size_t(l)]);
    trace << ',' << detail::fmt(row.b_p) << ',' << detail::fmt(row.b_a) << ','
          << detail::fmt(row.loss) << ',' << detail::fmt(row.ber) << '\n';
  }

  CheckpointMeta meta = make_meta(cfg, cfg.seeds[0]);
  meta.extra["qlf"] = cfg.quantization.qlf;
  nlohmann::ordered_json fmts = nlohmann::ordered_json::array();
  for (size_t l = 0; l < result.frozen.formats.size(); ++l) {
    const auto& f = result.frozen.formats[l];
    fmts.push_back({{"weights_int", f.weights.int_bits},
                    {"weights_frac", f.weights.frac_bits},
                    {"act_int", f.activations.int_bits},
                    {"act_frac", f.activations.frac_bits},
                    {"act_signed", f.activations.is_signed},
                    {"bias_int", result.frozen.bias_formats[l].int_bits},
                    {"bias_frac", result.frozen.bias_formats[l].frac_bits}}});
  }
  meta.extra["formats"] = fmts;
  save_checkpoint((dir / "ckpt_quantized.bin").string(), result.frozen.model, meta);
  save_checkpoint((dir / "ckpt_fullprec.bin").string(), result.model,
                  make_meta(cfg, cfg.seeds[0]));
  std::cout << "frozen BER = " << result.final_ber
            << " (B_p = " << mean_param_bits(result.frozen.formats)
            << ", B_a = " << mean_activation_bits(result.frozen.formats) << ")\n";
  return 0;
}

int cmd_dse(ExperimentConfig& cfg, int jobs) {
  const DesignSpace space =
      cfg.dse_preset == "paper" ? paper_design_space() : desk_design_space();
  DseResult result = run_dse(space, cfg.channel, cfg.training, jobs);
  const fs::path dir(cfg.out_dir);
  const std::string prov = provenance_comment(cfg, cfg.seeds[0]);
  write_points_csv((dir / "points.csv").string(), result.points, prov);
  write_front_csv((dir / "front.csv").string(), result.front, prov);
  const double budget =
      mac_budget(cfg.dsp_avail, cfg.t_req_baud, cfg.hardware.f_clk_hz);
  write_gnuplot_fronts(dir.string(), result.points, budget, prov);
  std::cout << result.points.size() << " points, " << result.front.size()
            << " on the front, MAC budget " << budget << "\n";
  return 0;
}

// Deterministic stand-in model when no trained checkpoint is supplied.
QuantizedCnn stand_in_quantized(const CnnConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  CnnModel model = init_cnn(config, rng);
  std::vector<LayerFormats> formats(size_t(config.layers));
  for (int l = 0; l < config.layers; ++l) {
    formats[size_t(l)].weights = FixedFormat{true, 2.0, 11.0};
    formats[size_t(l)].activations =
        FixedFormat{l == config.layers - 1, 3.0, 7.0};
  }
  return freeze(model, formats);
}

QuantizedCnn load_quantized(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty())
    return stand_in_quantized(cfg.model.cnn, cfg.seeds[0]);
  Checkpoint ck = load_checkpoint(cfg.checkpoint);
  if (!std::holds_alternative<CnnModel>(ck.model))
    throw UsageError("hwsim: checkpoint is not a cnn model");
  const CnnModel& m = std::get<CnnModel>(ck.model);
  if (!ck.meta.extra.contains("formats"))
    throw UsageError("hwsim: checkpoint has no quantization formats");
  QuantizedCnn q;
  q.model = m;
  for (const auto& f : ck.meta.extra["formats"]) {
    LayerFormats lf;
    lf.weights = FixedFormat{true, f.at("weights_int"), f.at("weights_frac")};
    lf.activations =
        FixedFormat{f.at("act_signed"), f.at("act_int"), f.at("act_frac")};
    q.formats.push_back(lf);
    q.bias_formats.push_back(
        FixedFormat{true, f.at("bias_int"), f.at("bias_frac")});
  }
  return q;
}

int cmd_hwsim(ExperimentConfig& cfg) {
  if (cfg.model.family != EqualizerSpec::Family::cnn)
    throw UsageError("hwsim: only the cnn family maps to the architecture");
  QuantizedCnn model = load_quantized(cfg);
  TimingParams params = cfg.hardware;

  const long block = params.l_inst * params.n_instances;
  Eigen::Index n_samples = Eigen::Index(cfg.n_symbols) * params.n_os;
  n_samples = (n_samples + block - 1) / block * block;
  Dataset ds = make_dataset(cfg.channel, n_samples / params.n_os, cfg.seeds[0]);

  DopConfig dop;
  bool found = false;
  for (const auto& d : dop_enumerate_configs(model.model.config))
    if (d.total(params.n_os) == cfg.dop) {
      dop = d;
      found = true;
    }
  if (!found)
    throw ConfigError("hwsim: DOP " + std::to_string(cfg.dop) +
                      " is not a supported schedule point");

  PartitionResult part = partition_process_merge(ds.samples, model, params, dop);
  SymbolSeq mono = decide(quantized_cnn_forward(ds.samples, model));
  SymbolSeq split = decide(part.symbols);
  Eigen::Index matches = 0;
  for (Eigen::Index i = 0; i < mono.size(); ++i)
    if (mono.values[i] == split.values[i]) ++matches;

  const TimingReport model_t = timing(params);
  const fs::path dir(cfg.out_dir);
  std::ofstream out(dir / "hwsim.csv");
  out << provenance_comment(cfg, cfg.seeds[0]);
  out << "n_instances,l_inst,o_act,dop,match_fraction,t_init_cycles,"
         "completion_cycles,sim_lambda_us,sim_t_net_gsps,model_lambda_us,"
         "model_t_net_gsps\n";
  out << params.n_instances << ',' << params.l_inst << ',' << params.o_act()
      << ',' << cfg.dop << ','
      << detail::fmt(double(matches) / double(mono.size())) << ','
      << part.cycles.t_init_cycles << ',' << part.cycles.completion_cycles << ','
      << detail::fmt(part.cycles.lambda_sym_s * 1e6) << ','
      << detail::fmt(part.cycles.t_net / 1e9) << ','
      << detail::fmt(model_t.lambda_sym_s * 1e6) << ','
      << detail::fmt(model_t.t_net / 1e9) << '\n';
  std::cout << "split/merge match fraction = "
            << double(matches) / double(mono.size()) << "\n";
  return 0;
}

int cmd_timing(ExperimentConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  std::ofstream out(dir / "timing.csv");
  out << provenance_comment(cfg, cfg.seeds[0]);
  out << "n_instances,l_inst,o_act,model_lambda_us,sim_lambda_us,"
         "model_t_net_gsps,sim_t_net_gsps,t_max_gsps\n";

  std::vector<int> instances = cfg.sweep_n_instances;
  if (instances.empty()) instances = {cfg.hardware.n_instances};
  std::vector<long> lengths = cfg.sweep_l_inst;
  if (lengths.empty()) lengths = {cfg.hardware.l_inst};

  for (int ni : instances)
    for (long l : lengths) {
      TimingParams p = cfg.hardware;
      p.n_instances = ni;
      p.l_inst = l;
      const TimingReport model_t = timing(p);
      const CycleStats sim = simulate_cycles(p, cfg.dop, cfg.sim_blocks);
      out << ni << ',' << l << ',' << p.o_act() << ','
          << detail::fmt(model_t.lambda_sym_s * 1e6) << ','
          << detail::fmt(sim.lambda_sym_s * 1e6) << ','
          << detail::fmt(model_t.t_net / 1e9) << ','
          << detail::fmt(sim.t_net / 1e9) << ','
          << detail::fmt(model_t.t_max / 1e9) << '\n';
    }
  std::cout << "wrote " << (dir / "timing.csv").string() << "\n";
  return 0;
}

int cmd_lutgen(ExperimentConfig& cfg) {
  if (cfg.t_req_list.empty())
    throw UsageError("lutgen: set hardware.t_req_list in the config");
  const auto table = lut_generate(cfg.t_req_list, cfg.hardware);
  const fs::path dir(cfg.out_dir);
  std::ofstream out(dir / "lut.csv");
  out << provenance_comment(cfg, cfg.seeds[0]);
  out << "t_req_samples_per_s,l_inst,feasible\n";
  for (const auto& e : table)
    out << detail::fmt(e.t_req) << ',' << e.l_inst << ',' << (e.feasible ? 1 : 0)
        << '\n';
  std::cout << "wrote " << (dir / "lut.csv").string() << "\n";
  return 0;
}

int cmd_dump(ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty())
    throw UsageError("dump: set evaluate.checkpoint in the config");
  dump_checkpoint(cfg.checkpoint, std::cout);
  return 0;
}

}  // namespace

int run_subcommand(const std::string& name, ExperimentConfig& cfg, int jobs) {
  fs::create_directories(cfg.out_dir);
  write_resolved_config(cfg);
  if (name == "simulate") return cmd_simulate(cfg);
  if (name == "train") return cmd_train(cfg);
  if (name == "evaluate") return cmd_evaluate(cfg);
  if (name == "quantize") return cmd_quantize(cfg);
  if (name == "dse") return cmd_dse(cfg, jobs);
  if (name == "hwsim") return cmd_hwsim(cfg);
  if (name == "timing") return cmd_timing(cfg);
  if (name == "lutgen") return cmd_lutgen(cfg);
  if (name == "dump") return cmd_dump(cfg);
  throw UsageError("unknown subcommand " + name);
}

}  // namespace eq
