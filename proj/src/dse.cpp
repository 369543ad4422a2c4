#include "eq/dse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "eq/errors.hpp"
#include "eq/io_detail.hpp"

namespace eq {

DesignSpace paper_design_space() {
  DesignSpace s;
  s.parallel_symbols = {1, 2, 4, 8, 16};
  s.layers = {3, 4, 5};
  s.kernels = {9, 15, 21};
  s.channels = {3, 4, 5};
  s.fir_taps = {3, 5, 9, 17, 25, 41, 57, 89, 121, 185, 249, 377, 505, 761, 1017};
  s.volterra_m1 = {3, 9, 15, 25, 35, 55, 75, 89, 121};
  s.volterra_m2 = {1, 3, 9, 15, 25, 30, 35};
  s.volterra_m3 = {1, 3, 9, 15};
  return s;
}

DesignSpace desk_design_space() {
  DesignSpace s;
  s.parallel_symbols = {4, 8};
  s.layers = {3};
  s.kernels = {9};
  s.channels = {3, 5};
  return s;
}

std::vector<EqualizerSpec> enumerate_space(const DesignSpace& space) {
  std::vector<EqualizerSpec> specs;
  for (int vp : space.parallel_symbols)
    for (int l : space.layers)
      for (int k : space.kernels)
        for (int c : space.channels) {
          EqualizerSpec e;
          e.family = EqualizerSpec::Family::cnn;
          e.cnn = CnnConfig{};
          e.cnn.layers = l;
          e.cnn.kernel = k;
          e.cnn.channels = c;
          e.cnn.parallel_symbols = vp;
          e.cnn.n_os = 2;
          specs.push_back(e);
        }
  for (int m : space.fir_taps) {
    EqualizerSpec e;
    e.family = EqualizerSpec::Family::fir;
    e.fir_taps = m;
    specs.push_back(e);
  }
  for (int m1 : space.volterra_m1)
    for (int m2 : space.volterra_m2)
      for (int m3 : space.volterra_m3) {
        EqualizerSpec e;
        e.family = EqualizerSpec::Family::volterra;
        e.volterra_taps = {m1, m2, m3};
        specs.push_back(e);
      }
  return specs;
}

ParetoPoint evaluate_config(const EqualizerSpec& spec, const ChannelConfig& channel,
                            const TrainConfig& cfg) {
  ParetoPoint p;
  p.spec = spec;
  p.id = spec.id();
  p.family = spec.family == EqualizerSpec::Family::fir        ? "fir"
             : spec.family == EqualizerSpec::Family::volterra ? "volterra"
                                                              : "cnn";
  p.mac = spec.mac();
  if (spec.family == EqualizerSpec::Family::volterra)
    p.mac_with_power_products =
        double(mac_per_symbol_volterra(spec.volterra_taps[0], spec.volterra_taps[1],
                                       spec.volterra_taps[2])
                   .with_power_products);
  else
    p.mac_with_power_products = p.mac;

  try {
    WorstOfN result = train_worst_of_n(spec, channel, cfg);
    p.worst_ber = result.worst_ber;
    p.median_ber = result.median_ber;
    for (const auto& run : result.runs)
      p.seed_bers.push_back(run.diverged ? 1.0 : run.final_ber);
  } catch (const TrainingError&) {
    p.valid = false;
    p.worst_ber = 1.0;
  }
  return p;
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> sorted;
  for (const auto& p : points)
    if (p.valid) sorted.push_back(p);
  if (sorted.empty()) throw UsageError("pareto_front: no valid points");
  std::sort(sorted.begin(), sorted.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.mac != b.mac) return a.mac < b.mac;
    if (a.worst_ber != b.worst_ber) return a.worst_ber < b.worst_ber;
    return a.id < b.id;
  });
  std::vector<ParetoPoint> front;
  double best_ber = std::numeric_limits<double>::infinity();
  double best_mac = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : sorted) {
    if (p.worst_ber < best_ber) {
      front.push_back(p);
      best_ber = p.worst_ber;
      best_mac = p.mac;
    } else if (p.worst_ber == best_ber && p.mac == best_mac) {
      front.push_back(p);  // exact tie: mutually non-dominated
    }
  }
  return front;
}

double mac_budget(double dsp_avail, double t_req, double f_clk) {
  if (dsp_avail <= 0.0 || t_req <= 0.0 || f_clk <= 0.0)
    throw ConfigError("mac_budget: all inputs must be positive");
  return dsp_avail / t_req * f_clk * 1.2;
}

DseResult run_dse(const DesignSpace& space, const ChannelConfig& channel,
                  const TrainConfig& cfg, int jobs) {
  const std::vector<EqualizerSpec> specs = enumerate_space(space);
  DseResult result;
  result.points.resize(specs.size());

  if (jobs < 1) jobs = 1;
  std::mutex mtx;
  size_t next = 0;
  auto worker = [&]() {
    for (;;) {
      size_t idx;
      {
        std::lock_guard<std::mutex> lock(mtx);
        if (next >= specs.size()) return;
        idx = next++;
      }
      result.points[idx] = evaluate_config(specs[idx], channel, cfg);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  result.front = pareto_front(result.points);
  return result;
}

namespace {

void write_point_row(std::ofstream& out, const ParetoPoint& p) {
  out << p.id << ',' << p.family << ',' << detail::fmt(p.mac) << ','
      << detail::fmt(p.mac_with_power_products) << ','
      << detail::fmt(p.worst_ber) << ',' << detail::fmt(p.median_ber) << ','
      << (p.valid ? 1 : 0);
  for (double b : p.seed_bers) out << ',' << detail::fmt(b);
  out << '\n';
}

}  // namespace

void write_points_csv(const std::string& path, const std::vector<ParetoPoint>& points,
                      const std::string& provenance) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  out << provenance;
  out << "# volterra mac counts one multiply-accumulate per kernel term; the\n"
         "# _with_power_products column additionally counts the input power terms\n";
  out << "id,family,mac_per_symbol,mac_with_power_products,worst_ber,median_ber,"
         "valid,seed_bers...\n";
  for (const auto& p : points) write_point_row(out, p);
}

void write_front_csv(const std::string& path, const std::vector<ParetoPoint>& front,
                     const std::string& provenance) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  out << provenance;
  out << "id,family,mac_per_symbol,worst_ber\n";
  for (const auto& p : front)
    out << p.id << ',' << p.family << ',' << detail::fmt(p.mac) << ','
        << detail::fmt(p.worst_ber) << '\n';
}

void write_gnuplot_fronts(const std::string& dir,
                          const std::vector<ParetoPoint>& points,
                          double budget_line, const std::string& provenance) {
  for (const std::string family : {"cnn", "fir", "volterra"}) {
    std::vector<ParetoPoint> subset;
    for (const auto& p : points)
      if (p.valid && p.family == family) subset.push_back(p);
    if (subset.empty()) continue;
    std::ofstream out(dir + "/front_" + family + ".dat");
    out << provenance;
    out << "# mac_per_symbol ber (pareto front, " << family << ")\n";
    for (const auto& p : pareto_front(subset))
      out << detail::fmt(p.mac) << ' ' << detail::fmt(p.worst_ber) << '\n';
  }
  std::ofstream out(dir + "/budget_line.dat");
  out << provenance;
  out << "# MAC_sym,max budget line\n" << detail::fmt(budget_line) << '\n';
}

}  // namespace eq
