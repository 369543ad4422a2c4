#pragma once

#include <string>
#include <vector>

#include "eq/channels.hpp"
#include "eq/training.hpp"

namespace eq {

/// Hyperparameter grid of the exploration.
struct DesignSpace {
  std::vector<int> parallel_symbols;
  std::vector<int> layers;
  std::vector<int> kernels;
  std::vector<int> channels;
  std::vector<int> fir_taps;
  std::vector<int> volterra_m1, volterra_m2, volterra_m3;
};

/// Full grid: 135 CNN configurations plus the FIR and Volterra tap lists.
DesignSpace paper_design_space();

/// Reduced CNN-only grid that runs on a desk: V_p {4,8} x L {3} x K {9} x C {3,5}.
DesignSpace desk_design_space();

/// Deterministic, duplicate-free enumeration: CNN grid (V_p, L, K, C nested),
/// then FIR taps ascending, then the Volterra grid.
std::vector<EqualizerSpec> enumerate_space(const DesignSpace& space);

struct ParetoPoint {
  std::string id;
  std::string family;
  EqualizerSpec spec;
  double mac = 0.0;
  double mac_with_power_products = 0.0;  // Volterra alternative counting
  double worst_ber = 1.0;
  double median_ber = 1.0;
  std::vector<double> seed_bers;  // 1.0 marks a diverged seed
  bool valid = true;
};

/// Worst-of-n training of one design point with its MAC cost attached.
ParetoPoint evaluate_config(const EqualizerSpec& spec, const ChannelConfig& channel,
                            const TrainConfig& cfg);

/// Non-dominated subset under (mac, worst_ber), both minimized, sorted by mac.
/// Invalid points are excluded.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

/// MAC_sym budget that still meets the throughput target:
/// (dsp_avail / t_req) * f_clk * 1.2. t_req in symbols/s.
double mac_budget(double dsp_avail, double t_req, double f_clk);

struct DseResult {
  std::vector<ParetoPoint> points;
  std::vector<ParetoPoint> front;
};

/// Evaluates every point of the space over a bounded worker pool; results
/// are merged by enumeration index, so the output is scheduling-independent.
DseResult run_dse(const DesignSpace& space, const ChannelConfig& channel,
                  const TrainConfig& cfg, int jobs);

void write_points_csv(const std::string& path, const std::vector<ParetoPoint>& points,
                      const std::string& provenance);
void write_front_csv(const std::string& path, const std::vector<ParetoPoint>& front,
                     const std::string& provenance);
/// Per-family front data in gnuplot-friendly columns (mac, ber).
void write_gnuplot_fronts(const std::string& dir,
                          const std::vector<ParetoPoint>& points,
                          double budget_line, const std::string& provenance);

}  // namespace eq
