#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <variant>

#include "eq/rng.hpp"
#include "eq/signal.hpp"

namespace eq {

/// Linear 3-tap ISI channel h = [0.407, 0.815, 0.407] with raised-cosine
/// pulse shaping and additive white Gaussian noise.
struct ProakisBConfig {
  double snr_db = 20.0;   // +inf disables noise
  int n_os = 2;
  double rc_rolloff = 0.25;
  int rc_span = 16;       // pulse span in symbols; 0 selects the identity pulse
};

/// Surrogate nonlinear optical link: RRC shaping, intensity modulation,
/// all-pass chromatic-dispersion filter on the field, square-law detection,
/// AWGN. A qualitative stand-in for a captured IM/DD channel, not a fiber
/// model.
struct ImddSurrogateConfig {
  double dispersion_ps_per_nm = 504.0;  // accumulated: coefficient x length
  double symbol_rate_hz = 40e9;
  double rrc_rolloff = 0.25;
  int rrc_span = 16;
  double snr_db = 24.0;  // +inf disables noise
  int n_os = 2;
  double bias = 1.1;          // field = sqrt(x + bias), keeps the argument >= 0
  double wavelength_nm = 1550.0;
};

using ChannelConfig = std::variant<ProakisBConfig, ImddSurrogateConfig>;

std::string channel_name(const ChannelConfig& cfg);
int channel_n_os(const ChannelConfig& cfg);

/// I.i.d. uniform draws from the constellation; deterministic under seed.
SymbolSeq gen_symbols(Eigen::Index n, const Eigen::ArrayXd& constellation,
                      Rng& rng);

SampleSeq simulate_proakis_b(const SymbolSeq& symbols, const ProakisBConfig& cfg,
                             Rng& rng);

SampleSeq simulate_imdd_surrogate(const SymbolSeq& symbols,
                                  const ImddSurrogateConfig& cfg, Rng& rng);

SampleSeq simulate(const SymbolSeq& symbols, const ChannelConfig& cfg, Rng& rng);

struct Dataset {
  SymbolSeq symbols;
  SampleSeq samples;
  std::uint64_t seed = 0;
};

/// gen_symbols + simulate under a single seed. Same seed, same bytes.
Dataset make_dataset(const ChannelConfig& cfg, Eigen::Index n_symbols,
                     std::uint64_t seed);

/// Columnar binary export: JSON header (magic, version, n_os, constellation,
/// seed, channel descriptor) followed by float32 samples then symbols.
void save_dataset(const std::string& path, const Dataset& ds,
                  const ChannelConfig& cfg);
Dataset load_dataset(const std::string& path);

/// Debug CSV: one row per symbol with its n_os samples.
void export_dataset_csv(const std::string& path, const Dataset& ds);

// Pulse construction, exposed for tests.
Eigen::ArrayXd raised_cosine_pulse(double rolloff, int span, int n_os);
Eigen::ArrayXd root_raised_cosine_pulse(double rolloff, int span, int n_os);

/// All-pass chromatic-dispersion transfer function applied to an optical
/// field in the frequency domain (quadratic phase, energy preserving).
/// The guard zero-padding suppresses circular wrap-around; with guard 0 and
/// a power-of-two length the operation is exactly unitary.
Eigen::ArrayXcd apply_dispersion(const Eigen::ArrayXcd& field,
                                 double dispersion_ps_per_nm,
                                 double sample_rate_hz, double wavelength_nm,
                                 Eigen::Index guard = 1024);

}  // namespace eq
