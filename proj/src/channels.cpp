#include "eq/channels.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <vector>

#include "eq/errors.hpp"
#include "eq/io_detail.hpp"

namespace eq {

namespace {

constexpr double kPi = std::numbers::pi;

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw ConfigError(std::string(name) + " is not finite");
}

// snr_db = +inf means "no noise"; NaN / -inf are configuration errors.
void require_snr(double snr_db) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
    throw ConfigError("snr_db is not a valid SNR");
}

Eigen::ArrayXd upsample(const Eigen::ArrayXd& symbols, int n_os) {
  Eigen::ArrayXd up = Eigen::ArrayXd::Zero(symbols.size() * n_os);
  for (Eigen::Index i = 0; i < symbols.size(); ++i) up[i * n_os] = symbols[i];
  return up;
}

// Linear convolution cropped so output index 0 lines up with input index 0
// given the filter's center tap index.
Eigen::ArrayXd convolve_centered(const Eigen::ArrayXd& x,
                                 const Eigen::ArrayXd& h, Eigen::Index center) {
  Eigen::ArrayXd y = Eigen::ArrayXd::Zero(x.size());
  const Eigen::Index hn = h.size();
  for (Eigen::Index j = 0; j < hn; ++j) {
    const double hj = h[j];
    if (hj == 0.0) continue;
    const Eigen::Index shift = j - center;  // y[i] += h[j] * x[i - shift]
    const Eigen::Index lo = std::max<Eigen::Index>(0, shift);
    const Eigen::Index hi = std::min(x.size(), x.size() + shift);
    if (hi > lo)
      y.segment(lo, hi - lo) += hj * x.segment(lo - shift, hi - lo);
  }
  return y;
}

// Mean power of the noiseless waveform defines the SNR reference.
void add_awgn(Eigen::ArrayXd& samples, double snr_db, Rng& rng) {
  if (snr_db == std::numeric_limits<double>::infinity()) return;
  const double power = samples.square().mean();
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  for (Eigen::Index i = 0; i < samples.size(); ++i)
    samples[i] += sigma * rng.gaussian();
}

}  // namespace

Eigen::ArrayXd raised_cosine_pulse(double rolloff, int span, int n_os) {
  if (span == 0) {
    Eigen::ArrayXd h(1);
    h << 1.0;
    return h;
  }
  if (rolloff <= 0.0 || rolloff > 1.0)
    throw ConfigError("raised-cosine rolloff must be in (0, 1]");
  const Eigen::Index n = static_cast<Eigen::Index>(span) * n_os + 1;
  Eigen::ArrayXd h(n);
  const Eigen::Index mid = (n - 1) / 2;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i - mid) / n_os;  // in symbols
    double v;
    const double denom = 1.0 - std::pow(2.0 * rolloff * t, 2.0);
    if (t == 0.0) {
      v = 1.0;
    } else if (std::abs(denom) < 1e-12) {
      v = (kPi / 4.0) * std::sin(kPi * t) / (kPi * t);  // limit at t = 1/(2*rolloff)
    } else {
      v = std::sin(kPi * t) / (kPi * t) * std::cos(kPi * rolloff * t) / denom;
    }
    h[i] = v;
  }
  return h / std::sqrt(h.square().sum());  // unit energy
}

Eigen::ArrayXd root_raised_cosine_pulse(double rolloff, int span, int n_os) {
  if (span == 0) {
    Eigen::ArrayXd h(1);
    h << 1.0;
    return h;
  }
  if (rolloff <= 0.0 || rolloff > 1.0)
    throw ConfigError("root-raised-cosine rolloff must be in (0, 1]");
  const Eigen::Index n = static_cast<Eigen::Index>(span) * n_os + 1;
  Eigen::ArrayXd h(n);
  const Eigen::Index mid = (n - 1) / 2;
  const double b = rolloff;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i - mid) / n_os;
    double v;
    if (t == 0.0) {
      v = 1.0 - b + 4.0 * b / kPi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
      v = (b / std::sqrt(2.0)) *
          ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * b)) +
           (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * b)));
    } else {
      const double num = std::sin(kPi * t * (1.0 - b)) +
                         4.0 * b * t * std::cos(kPi * t * (1.0 + b));
      const double den = kPi * t * (1.0 - std::pow(4.0 * b * t, 2.0));
      v = num / den;
    }
    h[i] = v;
  }
  return h / std::sqrt(h.square().sum());
}

std::string channel_name(const ChannelConfig& cfg) {
  return std::holds_alternative<ProakisBConfig>(cfg) ? "proakis_b"
                                                     : "imdd_surrogate";
}

int channel_n_os(const ChannelConfig& cfg) {
  return std::visit([](const auto& c) { return c.n_os; }, cfg);
}

SymbolSeq gen_symbols(Eigen::Index n, const Eigen::ArrayXd& constellation,
                      Rng& rng) {
  if (constellation.size() == 0)
    throw ConfigError("gen_symbols: constellation is empty");
  SymbolSeq s;
  s.constellation = constellation;
  s.bits_per_symbol = std::max(
      1, static_cast<int>(std::lround(std::log2(double(constellation.size())))));
  s.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    s.values[i] = constellation[static_cast<Eigen::Index>(
        rng.below(static_cast<std::uint64_t>(constellation.size())))];
  return s;
}

SampleSeq simulate_proakis_b(const SymbolSeq& symbols, const ProakisBConfig& cfg,
                             Rng& rng) {
  if (symbols.size() == 0) throw UsageError("simulate_proakis_b: empty input");
  require_snr(cfg.snr_db);
  require_finite(cfg.rc_rolloff, "rc_rolloff");
  if (cfg.n_os < 1) throw ConfigError("n_os must be >= 1");

  Eigen::ArrayXd up = upsample(symbols.values, cfg.n_os);
  const Eigen::ArrayXd pulse =
      raised_cosine_pulse(cfg.rc_rolloff, cfg.rc_span, cfg.n_os);
  Eigen::ArrayXd shaped = convolve_centered(up, pulse, (pulse.size() - 1) / 2);

  // Channel taps are symbol-spaced; expand to sample spacing. The center tap
  // (0.815) sits at lag zero so sample 0 keeps corresponding to symbol 0.
  Eigen::ArrayXd taps = Eigen::ArrayXd::Zero(2 * cfg.n_os + 1);
  taps[0] = 0.407;
  taps[cfg.n_os] = 0.815;
  taps[2 * cfg.n_os] = 0.407;
  Eigen::ArrayXd received = convolve_centered(shaped, taps, cfg.n_os);

  add_awgn(received, cfg.snr_db, rng);
  return SampleSeq{std::move(received), cfg.n_os};
}

Eigen::ArrayXcd apply_dispersion(const Eigen::ArrayXcd& field,
                                 double dispersion_ps_per_nm,
                                 double sample_rate_hz, double wavelength_nm,
                                 Eigen::Index guard) {
  const double d_acc = dispersion_ps_per_nm * 1e-3;  // s/m
  const double lambda_m = wavelength_nm * 1e-9;
  const double c_light = 299792458.0;
  const double phase_coeff = lambda_m * lambda_m * d_acc / (4.0 * kPi * c_light);

  Eigen::Index nfft = 1;
  while (nfft < field.size() + 2 * guard) nfft <<= 1;

  std::vector<std::complex<double>> time(size_t(nfft), {0.0, 0.0});
  for (Eigen::Index i = 0; i < field.size(); ++i) time[size_t(guard + i)] = field[i];

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq(size_t(nfft));
  fft.fwd(freq, time);
  for (Eigen::Index k = 0; k < nfft; ++k) {
    const double fk = (k <= nfft / 2 ? double(k) : double(k) - double(nfft)) *
                      sample_rate_hz / double(nfft);
    const double omega = 2.0 * kPi * fk;
    const double phi = phase_coeff * omega * omega;
    freq[size_t(k)] *= std::complex<double>(std::cos(phi), std::sin(phi));
  }
  fft.inv(time, freq);

  Eigen::ArrayXcd out(field.size());
  for (Eigen::Index i = 0; i < field.size(); ++i) out[i] = time[size_t(guard + i)];
  return out;
}

SampleSeq simulate_imdd_surrogate(const SymbolSeq& symbols,
                                  const ImddSurrogateConfig& cfg, Rng& rng) {
  if (symbols.size() == 0)
    throw UsageError("simulate_imdd_surrogate: empty input");
  if (cfg.n_os < 2)
    throw ConfigError("imdd surrogate needs n_os >= 2 (square-law doubles bandwidth)");
  require_snr(cfg.snr_db);
  require_finite(cfg.dispersion_ps_per_nm, "dispersion_ps_per_nm");
  if (cfg.symbol_rate_hz <= 0.0) throw ConfigError("symbol_rate_hz must be > 0");

  Eigen::ArrayXd up = upsample(symbols.values, cfg.n_os);
  const Eigen::ArrayXd pulse =
      root_raised_cosine_pulse(cfg.rrc_rolloff, cfg.rrc_span, cfg.n_os);
  Eigen::ArrayXd shaped = convolve_centered(up, pulse, (pulse.size() - 1) / 2);

  // Intensity modulation around the bias point; clamp guards the rare
  // shaped-waveform undershoot below -bias.
  Eigen::ArrayXcd field =
      (shaped + cfg.bias).max(0.0).sqrt().cast<std::complex<double>>();
  field = apply_dispersion(field, cfg.dispersion_ps_per_nm,
                           cfg.symbol_rate_hz * cfg.n_os, cfg.wavelength_nm);

  // Square-law detection, mean removal, noise.
  Eigen::ArrayXd detected = field.abs2();
  detected -= detected.mean();
  add_awgn(detected, cfg.snr_db, rng);
  return SampleSeq{std::move(detected), cfg.n_os};
}

SampleSeq simulate(const SymbolSeq& symbols, const ChannelConfig& cfg, Rng& rng) {
  if (std::holds_alternative<ProakisBConfig>(cfg))
    return simulate_proakis_b(symbols, std::get<ProakisBConfig>(cfg), rng);
  return simulate_imdd_surrogate(symbols, std::get<ImddSurrogateConfig>(cfg), rng);
}

Dataset make_dataset(const ChannelConfig& cfg, Eigen::Index n_symbols,
                     std::uint64_t seed) {
  Rng rng(seed);
  Rng sym_rng = rng.stream(1);
  Rng noise_rng = rng.stream(2);
  Dataset ds;
  ds.seed = seed;
  ds.symbols = gen_symbols(n_symbols, pam2_constellation(), sym_rng);
  ds.samples = simulate(ds.symbols, cfg, noise_rng);
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds,
                  const ChannelConfig& cfg) {
  nlohmann::ordered_json header;
  header["magic"] = "EQDSET";
  header["version"] = 1;
  header["tool_version"] = kToolVersion;
  header["n_os"] = ds.samples.n_os;
  header["constellation"] = std::vector<double>(
      ds.symbols.constellation.data(),
      ds.symbols.constellation.data() + ds.symbols.constellation.size());
  header["seed"] = ds.seed;
  header["rng"] = Rng::kAlgorithm;
  header["channel"] = detail::channel_to_json(cfg);
  header["snr_definition"] =
      "mean noiseless received-sample power over noise variance, in dB";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  detail::write_json_block(out, header);
  detail::write_f32_array(out, ds.samples.values);
  detail::write_f32_array(out, ds.symbols.values);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  nlohmann::ordered_json header = detail::read_json_block(in);
  if (header.value("magic", "") != "EQDSET")
    throw UsageError(path + " is not a dataset file");
  Dataset ds;
  ds.seed = header.value("seed", std::uint64_t(0));
  ds.samples.n_os = header.value("n_os", 2);
  ds.samples.values = detail::read_f32_array(in);
  ds.symbols = make_pam2(detail::read_f32_array(in));
  std::vector<double> c = header.value("constellation", std::vector<double>{});
  if (!c.empty()) {
    ds.symbols.constellation =
        Eigen::Map<const Eigen::ArrayXd>(c.data(), Eigen::Index(c.size()));
  }
  return ds;
}

void export_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  const int n_os = ds.samples.n_os;
  out << "symbol_index,symbol";
  for (int k = 0; k < n_os; ++k) out << ",sample_" << k;
  out << "\n";
  for (Eigen::Index i = 0; i < ds.symbols.size(); ++i) {
    out << i << ',' << detail::fmt(ds.symbols.values[i]);
    for (int k = 0; k < n_os; ++k) {
      const Eigen::Index j = i * n_os + k;
      out << ',' << (j < ds.samples.size() ? detail::fmt(ds.samples.values[j]) : "");
    }
    out << "\n";
  }
}

}  // namespace eq
