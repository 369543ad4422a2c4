#include "eq/signal.hpp"

#include <cmath>
#include <string>

#include "eq/errors.hpp"

namespace eq {

SymbolSeq make_pam2(Eigen::ArrayXd values) {
  SymbolSeq s;
  s.values = std::move(values);
  s.constellation = pam2_constellation();
  s.bits_per_symbol = 1;
  return s;
}

SymbolSeq decide(const SymbolSeq& soft) {
  if (soft.constellation.size() == 0)
    throw ConfigError("decide: constellation is empty");
  SymbolSeq out = soft;
  const auto& c = soft.constellation;
  for (Eigen::Index i = 0; i < soft.values.size(); ++i) {
    const double x = soft.values[i];
    Eigen::Index best = 0;
    double best_dist = std::abs(x - c[0]);
    for (Eigen::Index k = 1; k < c.size(); ++k) {
      const double d = std::abs(x - c[k]);
      if (d < best_dist) {  // strict: ties stay at the lower index
        best_dist = d;
        best = k;
      }
    }
    out.values[i] = c[best];
  }
  return out;
}

namespace {

Eigen::Index constellation_index(const Eigen::ArrayXd& c, double v) {
  Eigen::Index best = 0;
  double best_dist = std::abs(v - c[0]);
  for (Eigen::Index k = 1; k < c.size(); ++k) {
    const double d = std::abs(v - c[k]);
    if (d < best_dist) {
      best_dist = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

double ber(const SymbolSeq& decided, const SymbolSeq& reference,
           Eigen::Index skip_head, Eigen::Index skip_tail) {
  const Eigen::Index na = decided.size() - skip_head - skip_tail;
  const Eigen::Index nb = reference.size() - skip_head - skip_tail;
  if (na != nb)
    throw UsageError("ber: length mismatch after skipping (" +
                     std::to_string(na) + " vs " + std::to_string(nb) + ")");
  if (na <= 0) throw UsageError("ber: no symbols left to compare");

  const int bits = decided.bits_per_symbol;
  long errors = 0;
  for (Eigen::Index i = 0; i < na; ++i) {
    const Eigen::Index ia =
        constellation_index(decided.constellation, decided.values[skip_head + i]);
    const Eigen::Index ib = constellation_index(reference.constellation,
                                                reference.values[skip_head + i]);
    if (bits == 1) {
      errors += (ia != ib) ? 1 : 0;
    } else {
      // Natural binary mapping; enough for the PAM2 scope of this toolkit.
      errors += __builtin_popcountll(static_cast<unsigned long long>(ia ^ ib));
    }
  }
  return static_cast<double>(errors) / (static_cast<double>(na) * bits);
}

}  // namespace eq
