#include "eq/hwmodel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "eq/errors.hpp"

namespace eq {

namespace {

bool is_pow2(long v) { return v > 0 && (v & (v - 1)) == 0; }

long ceil_div(long a, long b) { return (a + b - 1) / b; }

long next_even(long n) { return n % 2 == 0 ? n : n + 1; }

std::vector<int> divisors(int n) {
  std::vector<int> d;
  for (int i = 1; i <= n; ++i)
    if (n % i == 0) d.push_back(i);
  return d;
}

}  // namespace

long overlap_symbols(int kernel, int parallel_symbols, int layers) {
  return long(kernel - 1) * (1 + long(parallel_symbols) * (layers - 1)) / 2;
}

long actual_overlap(long o_sym, int parallel_symbols, int n_instances) {
  if (parallel_symbols <= 0 || n_instances <= 0)
    throw ConfigError("actual_overlap: V_p and N_i must be positive");
  if (o_sym == 0) return 0;
  const long granule = long(parallel_symbols) * n_instances;
  return next_even(ceil_div(o_sym, granule)) * granule;
}

void TimingParams::validate() const {
  if (!is_pow2(n_instances))
    throw ConfigError("timing: N_i must be a power of two (got " +
                      std::to_string(n_instances) + ")");
  if (parallel_symbols < 1 || n_os < 1 || f_clk_hz <= 0.0)
    throw ConfigError("timing: V_p, N_os and f_clk must be positive");
  if (l_inst < 1 || l_inst % parallel_symbols != 0)
    throw ConfigError("timing: l_inst must be a positive multiple of V_p");
}

TimingReport timing(const TimingParams& p) {
  p.validate();
  TimingReport r;
  const double levels = std::log2(double(p.n_instances));
  const double rate = double(p.parallel_symbols) * p.f_clk_hz;  // per instance
  r.t_init_s = levels * double(p.l_ol()) / (2.0 * rate);
  r.lambda_sym_s = r.t_init_s;
  r.t_max = double(p.n_instances) * rate;
  r.t_net = r.t_max / (1.0 + 2.0 * double(p.o_act()) / double(p.l_inst));
  return r;
}

double processing_time_s(const TimingParams& p, long l_in) {
  p.validate();
  return double(l_in) /
         (double(p.n_instances) * p.parallel_symbols * p.f_clk_hz) *
         (1.0 + 2.0 * double(p.o_act()) / double(p.l_inst));
}

long min_seq_length(double t_req, const TimingParams& params) {
  TimingParams p = params;
  p.l_inst = p.parallel_symbols;  // validate independent of the search value
  p.validate();
  const double t_max = double(p.n_instances) * p.parallel_symbols * p.f_clk_hz;
  const long o_act = p.o_act();
  if (o_act == 0) {
    if (t_req > t_max)
      throw InfeasibleError("min_seq_length: required " + std::to_string(t_req) +
                            " samples/s exceeds T_max " + std::to_string(t_max));
    return p.parallel_symbols;
  }
  if (t_req >= t_max)
    throw InfeasibleError(
        "min_seq_length: required " + std::to_string(t_req) +
        " samples/s not below T_max " + std::to_string(t_max) +
        " (gap " + std::to_string(t_req - t_max) + " samples/s)");
  // T_net >= T_req  <=>  l_inst >= 2*o_act / (T_max/T_req - 1)
  const double bound = 2.0 * double(o_act) / (t_max / t_req - 1.0);
  long l = long(std::ceil(bound / double(p.parallel_symbols))) * p.parallel_symbols;
  if (l < p.parallel_symbols) l = p.parallel_symbols;
  return l;
}

std::vector<LutEntry> lut_generate(const std::vector<double>& t_reqs,
                                   const TimingParams& params) {
  std::vector<LutEntry> table;
  for (double t : t_reqs) {
    LutEntry e;
    e.t_req = t;
    try {
      e.l_inst = min_seq_length(t, params);
    } catch (const InfeasibleError&) {
      e.feasible = false;
      e.l_inst = 0;
    }
    table.push_back(e);
  }
  return table;
}

void DopConfig::validate(const CnnConfig& config) const {
  if (dop_k != 1 && dop_k != config.kernel)
    throw ConfigError("dop: kernel unroll must be 1 or K (got " +
                      std::to_string(dop_k) + ")");
  // Channel unrolls divide every hidden-layer channel dimension (layer 1's
  // single input channel has no unrollable loop).
  if (dop_i < 1 || config.channels % dop_i != 0)
    throw ConfigError("dop: input-channel unroll must divide C");
  if (dop_o < 1 || config.channels % dop_o != 0)
    throw ConfigError("dop: output-channel unroll must divide C");
  if (dop_k == config.kernel && (dop_i != config.channels || dop_o != config.channels))
    throw ConfigError("dop: kernel unroll requires fully unrolled channel loops");
  if (phase_parallel && dop_i * dop_o != config.channels)
    throw ConfigError("dop: phase-parallel output stage pairs with unroll C");
}

std::vector<DopConfig> dop_enumerate_configs(const CnnConfig& config) {
  std::vector<DopConfig> out;
  const int c = config.channels;
  for (int i : divisors(c))
    for (int o : divisors(c)) {
      out.push_back(DopConfig{i, o, 1, false});
      if (i * o == c) out.push_back(DopConfig{i, o, 1, true});
    }
  out.push_back(DopConfig{c, c, config.kernel, false});
  for (auto& d : out) d.validate(config);
  return out;
}

std::vector<int> dop_enumerate(const CnnConfig& config) {
  std::vector<int> totals;
  for (const auto& d : dop_enumerate_configs(config))
    totals.push_back(d.total(config.n_os));
  std::sort(totals.begin(), totals.end());
  totals.erase(std::unique(totals.begin(), totals.end()), totals.end());
  return totals;
}

CycleStats simulate_cycles(const TimingParams& params, int dop_total,
                           long n_blocks) {
  params.validate();
  if (n_blocks < 1) throw UsageError("simulate_cycles: need at least one block");
  CnnConfig cfg;
  cfg.layers = params.layers;
  cfg.kernel = params.kernel;
  cfg.channels = params.channels;
  cfg.parallel_symbols = params.parallel_symbols;
  cfg.n_os = params.n_os;

  const std::vector<int> legal = dop_enumerate(cfg);
  if (std::find(legal.begin(), legal.end(), dop_total) == legal.end())
    throw ConfigError("simulate_cycles: DOP " + std::to_string(dop_total) +
                      " is not a supported schedule point");
  const int dop_max = legal.back();

  const long l_ol = params.l_ol();
  const int v_p = params.parallel_symbols;
  const int levels = std::countr_zero(unsigned(params.n_instances));

  // One split stage forwards a whole sub-sequence before switching branches,
  // so taking the late branch of a stage costs ceil(l_ol / (2*V_p)) cycles.
  const long stage_lag = ceil_div(l_ol, 2L * v_p);
  const long t_init = long(levels) * stage_lag;

  // Full unroll retires one output group (V_p samples worth) per cycle;
  // partial unrolls slow down proportionally.
  const long block_cycles = ceil_div(l_ol * dop_max, long(v_p) * dop_total);
  const long depth = long(params.layers) * params.kernel;  // conv pipeline fill

  CycleStats s;
  s.t_init_cycles = t_init;
  s.first_output_cycle = t_init + depth;
  s.completion_cycles = t_init + n_blocks * block_cycles + depth;
  s.processing_cycles = s.completion_cycles - s.t_init_cycles;
  s.lambda_sym_s = double(s.t_init_cycles) / params.f_clk_hz;
  const double raw_samples = double(n_blocks) * params.n_instances * params.l_inst;
  s.t_net = raw_samples / (double(s.processing_cycles) / params.f_clk_hz);
  return s;
}

PartitionResult partition_process_merge(const SampleSeq& samples,
                                        const QuantizedCnn& model,
                                        const TimingParams& params,
                                        const DopConfig& dop) {
  params.validate();
  dop.validate(model.model.config);
  const CnnConfig& cfg = model.model.config;
  if (cfg.parallel_symbols != params.parallel_symbols || cfg.n_os != params.n_os ||
      cfg.kernel != params.kernel || cfg.layers != params.layers ||
      cfg.channels != params.channels)
    throw UsageError("partition: timing parameters do not match the model");

  const int n_os = params.n_os;
  const long group = long(params.parallel_symbols) * n_os;
  if (params.l_inst % group != 0)
    throw UsageError("partition: l_inst must be a multiple of V_p*N_os");
  const long o_act = params.o_act();
  if ((params.l_inst + 2 * o_act) % group != 0)
    throw UsageError("partition: l_ol must be a multiple of V_p*N_os");

  PartitionResult result;
  const long block = params.l_inst * params.n_instances;
  Eigen::ArrayXd stream = samples.values;
  if (stream.size() % block != 0) {
    const long padded = ceil_div(stream.size(), block) * block;
    Eigen::ArrayXd tmp = Eigen::ArrayXd::Zero(padded);
    tmp.head(stream.size()) = stream;
    stream = std::move(tmp);
    result.padded = true;
  }

  const long n_sub = stream.size() / params.l_inst;
  const long out_per_sub = params.l_inst / n_os;
  Eigen::ArrayXd merged(stream.size() / n_os);

  // Overlap generation draws real neighboring samples where the stream has
  // them and zero-fills at the absolute boundaries, matching the zero
  // padding of the monolithic forward. Sub-sequence s is routed to instance
  // s mod N_i; the routing does not affect the functional result.
  SampleSeq sub_seq{Eigen::ArrayXd(), n_os};
  for (long s = 0; s < n_sub; ++s) {
    const long start = s * params.l_inst;
    Eigen::ArrayXd sub = Eigen::ArrayXd::Zero(params.l_inst + 2 * o_act);
    const long lo = std::max(0L, start - o_act);
    const long hi = std::min<long>(stream.size(), start + params.l_inst + o_act);
    sub.segment(lo - (start - o_act), hi - lo) = stream.segment(lo, hi - lo);
    sub_seq.values = std::move(sub);
    SymbolSeq sub_out = quantized_cnn_forward(sub_seq, model);
    merged.segment(start / n_os, out_per_sub) =
        sub_out.values.segment(o_act / n_os, out_per_sub);
  }

  result.symbols = make_pam2(std::move(merged));
  result.symbols.constellation = pam2_constellation();
  result.cycles =
      simulate_cycles(params, dop.total(n_os), n_sub / params.n_instances);
  return result;
}

}  // namespace eq
