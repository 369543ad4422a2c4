#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <vector>

#include "eq/channels.hpp"
#include "eq/errors.hpp"

using namespace eq;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ProakisBConfig noiseless(int span = 0) {
  ProakisBConfig cfg;
  cfg.snr_db = kInf;
  cfg.rc_span = span;
  return cfg;
}

}  // namespace

TEST_CASE("gen_symbols is deterministic under the seed") {
  Rng a(99), b(99);
  SymbolSeq s1 = gen_symbols(4, pam2_constellation(), a);
  SymbolSeq s2 = gen_symbols(4, pam2_constellation(), b);
  CHECK((s1.values == s2.values).all());
  CHECK(s1.size() == 4);
}

TEST_CASE("gen_symbols n=0 gives an empty sequence") {
  Rng rng(1);
  CHECK(gen_symbols(0, pam2_constellation(), rng).size() == 0);
}

TEST_CASE("gen_symbols empirical mean over 1e6 PAM2 draws") {
  Rng rng(2024);
  SymbolSeq s = gen_symbols(1000000, pam2_constellation(), rng);
  CHECK(std::abs(s.values.mean()) < 0.01);
}

TEST_CASE("proakis impulse response appears at symbol spacing") {
  Eigen::ArrayXd v = Eigen::ArrayXd::Zero(9);
  v[4] = 1.0;  // unit impulse mid-sequence
  Rng rng(1);
  SampleSeq out = simulate_proakis_b(make_pam2(v), noiseless(), rng);
  CHECK(out.size() == 18);
  CHECK(out.values[6] == doctest::Approx(0.407).epsilon(1e-12));
  CHECK(out.values[8] == doctest::Approx(0.815).epsilon(1e-12));
  CHECK(out.values[10] == doctest::Approx(0.407).epsilon(1e-12));
  CHECK(out.values[7] == 0.0);
  CHECK(out.values[9] == 0.0);
  CHECK(out.values[0] == 0.0);
}

TEST_CASE("proakis path is linear before noise") {
  Rng rng(5);
  SymbolSeq a = gen_symbols(64, pam2_constellation(), rng);
  SymbolSeq b = gen_symbols(64, pam2_constellation(), rng);
  SymbolSeq sum = a;
  sum.values = a.values + b.values;

  ProakisBConfig cfg = noiseless(16);
  Rng r1(0), r2(0), r3(0);
  SampleSeq ya = simulate_proakis_b(a, cfg, r1);
  SampleSeq yb = simulate_proakis_b(b, cfg, r2);
  SampleSeq ys = simulate_proakis_b(sum, cfg, r3);
  const double scale = ys.values.abs().maxCoeff();
  CHECK(((ya.values + yb.values) - ys.values).abs().maxCoeff() / scale < 1e-12);

  Eigen::ArrayXd zeros = Eigen::ArrayXd::Zero(16);
  Rng r4(0);
  CHECK(simulate_proakis_b(make_pam2(zeros), cfg, r4).values.abs().maxCoeff() ==
        0.0);
}

TEST_CASE("proakis measured SNR matches the configured SNR within 0.1 dB") {
  ProakisBConfig cfg;
  cfg.snr_db = 20.0;
  Rng sym_rng(31);
  SymbolSeq s = gen_symbols(500000, pam2_constellation(), sym_rng);
  Rng clean_rng(7), noisy_rng(7);
  SampleSeq clean = simulate_proakis_b(s, noiseless(16), clean_rng);
  SampleSeq noisy = simulate_proakis_b(s, cfg, noisy_rng);
  const double p_sig = clean.values.square().mean();
  const double p_noise = (noisy.values - clean.values).square().mean();
  const double measured = 10.0 * std::log10(p_sig / p_noise);
  CHECK(measured == doctest::Approx(20.0).epsilon(0.005));  // 0.1 dB at 20 dB
}

TEST_CASE("proakis rejects invalid configs") {
  Rng rng(1);
  SymbolSeq s = gen_symbols(8, pam2_constellation(), rng);
  ProakisBConfig bad;
  bad.snr_db = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(simulate_proakis_b(s, bad, rng), ConfigError);
  ProakisBConfig bad2;
  bad2.rc_rolloff = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(simulate_proakis_b(s, bad2, rng), ConfigError);
  CHECK_THROWS_AS(simulate_proakis_b(SymbolSeq{}, ProakisBConfig{}, rng),
                  UsageError);
}

TEST_CASE("imdd with zero dispersion reduces to a memoryless square law") {
  ImddSurrogateConfig cfg;
  cfg.dispersion_ps_per_nm = 0.0;
  cfg.snr_db = kInf;
  cfg.rrc_span = 0;  // identity pulse isolates the nonlinearity
  Rng rng(3);
  SymbolSeq s = gen_symbols(128, pam2_constellation(), rng);
  Rng r1(0);
  SampleSeq out = simulate_imdd_surrogate(s, cfg, r1);
  // field = sqrt(x + bias), detection = field^2 = x + bias, minus the mean.
  Eigen::ArrayXd up = Eigen::ArrayXd::Zero(256);
  for (Eigen::Index i = 0; i < 128; ++i) up[2 * i] = s.values[i];
  Eigen::ArrayXd expect = up + cfg.bias;
  expect -= expect.mean();
  CHECK((out.values - expect).abs().maxCoeff() < 1e-9);
}

TEST_CASE("chromatic dispersion filter preserves field energy") {
  Rng rng(11);
  Eigen::ArrayXcd field(4096);
  for (Eigen::Index i = 0; i < field.size(); ++i)
    field[i] = {rng.gaussian(), rng.gaussian()};
  // guard 0 + power-of-two length: the filter is exactly unitary.
  Eigen::ArrayXcd out = apply_dispersion(field, 504.0, 80e9, 1550.0, 0);
  const double before = field.abs2().sum();
  const double after = out.abs2().sum();
  CHECK(std::abs(after - before) / before < 1e-9);
}

TEST_CASE("imdd requires n_os >= 2") {
  ImddSurrogateConfig cfg;
  cfg.n_os = 1;
  Rng rng(1);
  SymbolSeq s = gen_symbols(8, pam2_constellation(), rng);
  CHECK_THROWS_AS(simulate_imdd_surrogate(s, cfg, rng), ConfigError);
}

TEST_CASE("make_dataset is reproducible and split by seed") {
  ChannelConfig cfg = ProakisBConfig{};
  Dataset a = make_dataset(cfg, 256, 7);
  Dataset b = make_dataset(cfg, 256, 7);
  Dataset c = make_dataset(cfg, 256, 8);
  CHECK((a.symbols.values == b.symbols.values).all());
  CHECK((a.samples.values == b.samples.values).all());
  CHECK_FALSE((a.symbols.values == c.symbols.values).all());
  CHECK(a.samples.size() == a.symbols.size() * 2);
}

TEST_CASE("dataset file round-trips through the binary format") {
  ChannelConfig cfg = ProakisBConfig{};
  Dataset ds = make_dataset(cfg, 64, 3);
  const std::string path = "test_dataset.bin";
  save_dataset(path, ds, cfg);
  Dataset back = load_dataset(path);
  CHECK(back.seed == 3);
  CHECK(back.samples.n_os == 2);
  CHECK(back.symbols.size() == 64);
  // Body is float32 by format, so compare at that precision.
  for (Eigen::Index i = 0; i < ds.samples.size(); ++i)
    CHECK(back.samples.values[i] == doctest::Approx(ds.samples.values[i]).epsilon(1e-6));
  export_dataset_csv("test_dataset.csv", ds);
  std::remove(path.c_str());
  std::remove("test_dataset.csv");
}
