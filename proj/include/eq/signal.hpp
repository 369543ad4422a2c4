#pragma once

#include <Eigen/Core>

#include "eq/rng.hpp"

namespace eq {

/// A symbol stream with its constellation. Soft (equalizer output) and
/// decided/transmitted streams share this type; a decided stream only
/// holds constellation points.
struct SymbolSeq {
  Eigen::ArrayXd values;
  Eigen::ArrayXd constellation;  // strictly increasing
  int bits_per_symbol = 1;

  Eigen::Index size() const { return values.size(); }
};

inline Eigen::ArrayXd pam2_constellation() {
  Eigen::ArrayXd c(2);
  c << -1.0, 1.0;
  return c;
}

/// PAM2 stream around the given values.
SymbolSeq make_pam2(Eigen::ArrayXd values);

/// Real-valued received waveform, n_os samples per symbol.
struct SampleSeq {
  Eigen::ArrayXd values;
  int n_os = 2;

  Eigen::Index size() const { return values.size(); }
};

/// Map every soft value to the closest constellation point; ties break
/// toward the lower-index point.
SymbolSeq decide(const SymbolSeq& soft);

/// Bit error rate between two decided streams, skipping transient symbols
/// at the head/tail. For PAM2 symbol errors equal bit errors.
double ber(const SymbolSeq& decided, const SymbolSeq& reference,
           Eigen::Index skip_head = 0, Eigen::Index skip_tail = 0);

}  // namespace eq
