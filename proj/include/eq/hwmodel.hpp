#pragma once

#include <cstdint>
#include <vector>

#include "eq/equalizers.hpp"
#include "eq/quantization.hpp"
#include "eq/signal.hpp"

namespace eq {

// All stream lengths in this module (l_inst, o_sym, o_act, l_ol, l_in) are
// measured in input samples, the unit the split/merge fabric moves at
// V_p samples per instance and clock cycle. Throughputs are samples/s.

/// Half receptive field of the template: (K-1) * (1 + V_p*(L-1)) / 2.
long overlap_symbols(int kernel, int parallel_symbols, int layers);

/// Rounds the required overlap up to the overlap-generation granularity:
/// nextEven(ceil(o_sym / (V_p*N_i))) * V_p * N_i.
long actual_overlap(long o_sym, int parallel_symbols, int n_instances);

struct TimingParams {
  int n_instances = 64;      // power of two
  int parallel_symbols = 8;  // V_p
  int n_os = 2;
  double f_clk_hz = 200e6;
  long l_inst = 7320;        // per-instance sub-sequence, multiple of V_p
  int kernel = 9;
  int layers = 3;
  int channels = 5;          // hidden width, fixes the legal DOP set
  long o_act_override = -1;  // <0 derives from the overlap formulas

  long o_sym() const { return overlap_symbols(kernel, parallel_symbols, layers); }
  long o_act() const {
    return o_act_override >= 0
               ? o_act_override
               : actual_overlap(o_sym(), parallel_symbols, n_instances);
  }
  long l_ol() const { return l_inst + 2 * o_act(); }
  void validate() const;
};

struct TimingReport {
  double t_init_s = 0.0;      // time until the last instance starts
  double lambda_sym_s = 0.0;  // maximum symbol latency (== t_init)
  double t_net = 0.0;         // net throughput, samples/s
  double t_max = 0.0;         // N_i * V_p * f_clk
};

TimingReport timing(const TimingParams& params);

/// Processing time for a stream of l_in samples (excludes pipeline fill).
double processing_time_s(const TimingParams& params, long l_in);

/// Smallest l_inst (multiple of V_p) with T_net >= t_req.
long min_seq_length(double t_req, const TimingParams& params);

struct LutEntry {
  double t_req = 0.0;
  long l_inst = 0;
  bool feasible = true;
};
std::vector<LutEntry> lut_generate(const std::vector<double>& t_reqs,
                                   const TimingParams& params);

/// Unroll factors of one CNN instance. dop_k is all-or-nothing.
struct DopConfig {
  int dop_i = 1;
  int dop_o = 1;
  int dop_k = 1;
  bool phase_parallel = false;  // output stage processes N_os sample phases

  int total(int n_os) const {
    return dop_i * dop_o * dop_k * (phase_parallel ? n_os : 1);
  }
  void validate(const CnnConfig& config) const;
};

/// Supported schedule points of the architecture for a topology, as total
/// DOP values (deduplicated, ascending). Channel unrolls divide the hidden
/// width C; the kernel unroll requires fully unrolled channel loops; the
/// fully channel-unrolled schedule also exists in an N_os-phase-parallel
/// variant of the output stage.
std::vector<int> dop_enumerate(const CnnConfig& config);
std::vector<DopConfig> dop_enumerate_configs(const CnnConfig& config);

/// Event-driven cycle schedule of the split/process/merge fabric.
struct CycleStats {
  long t_init_cycles = 0;       // last instance starts processing
  long first_output_cycle = 0;  // adds the conv pipeline depth L*K
  long completion_cycles = 0;   // all outputs merged
  long processing_cycles = 0;   // completion - t_init
  double lambda_sym_s = 0.0;
  double t_net = 0.0;           // raw samples / processing time
};

/// Timing-only simulation of n_blocks rounds over all instances.
CycleStats simulate_cycles(const TimingParams& params, int dop_total,
                           long n_blocks);

struct PartitionResult {
  SymbolSeq symbols;
  CycleStats cycles;
  bool padded = false;  // input was zero-padded to a whole number of blocks
};

/// Functional + cycle simulation: overlap generation, hierarchical split,
/// per-instance quantized inference, merge, overlap removal. With overlap
/// >= the receptive half-width the output is bit-identical to monolithic
/// quantized inference on the whole stream.
PartitionResult partition_process_merge(const SampleSeq& samples,
                                        const QuantizedCnn& model,
                                        const TimingParams& params,
                                        const DopConfig& dop);

}  // namespace eq
