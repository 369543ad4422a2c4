#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "eq/equalizers.hpp"
#include "eq/errors.hpp"
#include "eq/rng.hpp"

using namespace eq;

namespace {

Eigen::ArrayXd random_array(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Eigen::ArrayXd a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = scale * (2.0 * rng.uniform() - 1.0);
  return a;
}

// Direct two-loop evaluation of the tap-weighted sum, independent of
// fir_forward's windowing code.
double fir_oracle_at(const Eigen::ArrayXd& x, const Eigen::ArrayXd& w, int n_os,
                     Eigen::Index j) {
  const int m_star = int(w.size()) / 2;
  double acc = 0.0;
  for (int m = -m_star; m <= m_star; ++m) {
    const Eigen::Index idx = j * n_os + m;
    const double xv = (idx >= 0 && idx < x.size()) ? x[idx] : 0.0;
    acc += xv * w[m + m_star];
  }
  return acc;
}

// Explicit-loop CNN oracle: pad, full strided cross-correlation, crop to the
// nominal width, batch norm with running statistics, ReLU, interleave.
struct CnnOracle {
  const CnnModel& model;

  std::vector<std::vector<double>> conv(const std::vector<std::vector<double>>& x,
                                        int layer) const {
    const CnnConfig& cfg = model.config;
    const int pad = cfg.pad();
    const int stride = cfg.stride(layer);
    const int k = cfg.kernel;
    const Eigen::Index w_in = Eigen::Index(x[0].size());

    // Explicit zero-padded input.
    std::vector<std::vector<double>> padded(x.size());
    for (size_t c = 0; c < x.size(); ++c) {
      padded[c].assign(size_t(w_in) + 2 * size_t(pad), 0.0);
      for (Eigen::Index i = 0; i < w_in; ++i) padded[c][size_t(pad + i)] = x[c][size_t(i)];
    }

    const Eigen::Index w_full = (w_in + 2 * pad - k) / stride + 1;
    const Eigen::Index w_nom = w_in / stride;
    const Eigen::Index drop = (w_full - w_nom) / 2;

    const auto& layer_p = model.layers[size_t(layer)];
    std::vector<std::vector<double>> y(layer_p.weight.size());
    for (size_t o = 0; o < y.size(); ++o) {
      y[o].assign(size_t(w_nom), 0.0);
      for (Eigen::Index j = 0; j < w_nom; ++j) {
        double acc = layer_p.bias.size() > 0 ? layer_p.bias[Eigen::Index(o)] : 0.0;
        for (size_t i = 0; i < x.size(); ++i)
          for (int kk = 0; kk < k; ++kk)
            acc += padded[i][size_t((j + drop) * stride + kk)] *
                   layer_p.weight[o](Eigen::Index(i), kk);
        y[o][size_t(j)] = acc;
      }
    }
    return y;
  }

  Eigen::ArrayXd forward(const Eigen::ArrayXd& samples) const {
    std::vector<std::vector<double>> x(1);
    x[0].assign(samples.data(), samples.data() + samples.size());
    for (int l = 0; l < model.config.layers; ++l) {
      x = conv(x, l);
      const auto& layer = model.layers[size_t(l)];
      if (layer.has_bn()) {
        for (size_t c = 0; c < x.size(); ++c) {
          const double scale = layer.gamma[Eigen::Index(c)] /
                               std::sqrt(layer.running_var[Eigen::Index(c)] +
                                         kBatchNormEps);
          const double shift = layer.beta[Eigen::Index(c)] -
                               scale * layer.running_mean[Eigen::Index(c)];
          for (double& v : x[c]) v = std::max(0.0, scale * v + shift);
        }
      }
    }
    Eigen::ArrayXd out(Eigen::Index(x.size() * x[0].size()));
    for (size_t j = 0; j < x[0].size(); ++j)
      for (size_t o = 0; o < x.size(); ++o)
        out[Eigen::Index(j * x.size() + o)] = x[o][j];
    return out;
  }
};

CnnModel random_cnn(const CnnConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  CnnModel m = init_cnn(cfg, rng);
  for (auto& layer : m.layers) {
    if (!layer.has_bn()) continue;
    for (Eigen::Index c = 0; c < layer.gamma.size(); ++c) {
      layer.gamma[c] = 0.5 + rng.uniform();
      layer.beta[c] = rng.uniform() - 0.5;
      layer.running_mean[c] = rng.uniform() - 0.5;
      layer.running_var[c] = 0.5 + rng.uniform();
    }
  }
  return m;
}

}  // namespace

TEST_CASE("fir impulse reads the reversed tap window at symbol positions") {
  FirModel m;
  m.n_os = 2;
  m.weights = Eigen::ArrayXd(5);
  m.weights << 1, 2, 3, 4, 5;
  Eigen::ArrayXd x = Eigen::ArrayXd::Zero(16);
  x[8] = 1.0;  // impulse at sample 8 = symbol 4
  SymbolSeq y = fir_forward(SampleSeq{x, 2}, m);
  CHECK(y.values[4] == 3.0);  // center tap
  CHECK(y.values[3] == 5.0);  // window two samples earlier hits the last tap
  CHECK(y.values[5] == 1.0);
}

TEST_CASE("fir M=1 identity at n_os=1") {
  FirModel m;
  m.n_os = 1;
  m.weights = Eigen::ArrayXd::Ones(1);
  Rng rng(3);
  Eigen::ArrayXd x = random_array(32, rng);
  SymbolSeq y = fir_forward(SampleSeq{x, 1}, m);
  CHECK((y.values == x).all());
}

TEST_CASE("fir matches the two-loop oracle on random instances") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const int m_taps = 2 * int(rng.below(12)) + 1;
    FirModel m;
    m.n_os = 2;
    m.weights = random_array(m_taps, rng);
    Eigen::ArrayXd x = random_array(64, rng);
    SymbolSeq y = fir_forward(SampleSeq{x, 2}, m);
    for (Eigen::Index j = 0; j < y.size(); ++j)
      CHECK(y.values[j] ==
            doctest::Approx(fir_oracle_at(x, m.weights, 2, j)).epsilon(1e-12));
  }
}

TEST_CASE("volterra reduces to fir when higher orders vanish") {
  Rng rng(7);
  VolterraModel v = make_volterra(7, 1, 1);
  v.w1 = random_array(7, rng);
  Eigen::ArrayXd x = random_array(40, rng);
  FirModel f;
  f.n_os = 2;
  f.weights = v.w1;
  SymbolSeq yv = volterra_forward(SampleSeq{x, 2}, v);
  SymbolSeq yf = fir_forward(SampleSeq{x, 2}, f);
  for (Eigen::Index j = 0; j < yv.size(); ++j)
    CHECK(yv.values[j] == doctest::Approx(yf.values[j]).epsilon(1e-12));
}

TEST_CASE("volterra closed form on constant input") {
  VolterraModel v = make_volterra(3, 3, 3);
  Rng rng(19);
  v.w0 = 0.7;
  v.w1 = random_array(3, rng);
  v.w2 = Eigen::MatrixXd::Random(3, 3);
  v.w3 = random_array(27, rng);
  const double c = 1.3;
  // Interior symbol: all windows see the constant.
  Eigen::ArrayXd x = Eigen::ArrayXd::Constant(20, c);
  SymbolSeq y = volterra_forward(SampleSeq{x, 2}, v);
  const double expect = v.w0 + c * v.w1.sum() + c * c * v.w2.sum() +
                        c * c * c * v.w3.sum();
  CHECK(y.values[5] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("volterra matches the brute-force triple-loop oracle") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const int m1 = 2 * int(rng.below(4)) + 1;
    const int m2 = 2 * int(rng.below(3)) + 1;
    const int m3 = 2 * int(rng.below(2)) + 1;
    VolterraModel v = make_volterra(m1, m2, m3);
    v.w0 = rng.uniform();
    v.w1 = random_array(m1, rng);
    for (Eigen::Index i = 0; i < m2; ++i)
      for (Eigen::Index j = 0; j < m2; ++j) v.w2(i, j) = rng.uniform() - 0.5;
    v.w3 = random_array(Eigen::Index(m3) * m3 * m3, rng);
    Eigen::ArrayXd x = random_array(24, rng);
    SymbolSeq y = volterra_forward(SampleSeq{x, 2}, v);

    auto at = [&](Eigen::Index i) { return (i >= 0 && i < x.size()) ? x[i] : 0.0; };
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      const Eigen::Index c = 2 * j;
      double acc = v.w0;
      for (int a = 0; a < m1; ++a) acc += at(c + a - m1 / 2) * v.w1[a];
      for (int a = 0; a < m2; ++a)
        for (int b = 0; b < m2; ++b)
          acc += at(c + a - m2 / 2) * at(c + b - m2 / 2) * v.w2(a, b);
      for (int a = 0; a < m3; ++a)
        for (int b = 0; b < m3; ++b)
          for (int d = 0; d < m3; ++d)
            acc += at(c + a - m3 / 2) * at(c + b - m3 / 2) * at(c + d - m3 / 2) *
                   v.w3_at(a, b, d);
      CHECK(y.values[j] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("cnn degenerate two-layer identity copies strided input") {
  // K=1, identity kernels, batch norm neutral: the network reduces to the
  // stride pattern, so outputs are a strided copy of the input.
  CnnConfig cfg;
  cfg.layers = 2;
  cfg.kernel = 1;
  cfg.channels = 1;
  cfg.parallel_symbols = 1;
  cfg.n_os = 2;
  cfg.padding = 0;
  Rng rng(1);
  CnnModel m = init_cnn(cfg, rng);
  m.layers[0].weight[0](0, 0) = 1.0;
  m.layers[1].weight[0](0, 0) = 1.0;
  // Neutral batch norm on the hidden layer.
  m.layers[0].gamma[0] = std::sqrt(1.0 + kBatchNormEps);
  m.layers[0].beta[0] = 0.0;
  m.layers[0].running_mean[0] = 0.0;
  m.layers[0].running_var[0] = 1.0;

  Eigen::ArrayXd x(8);
  x << 1, 2, 3, 4, 5, 6, 7, 8;  // positive values pass ReLU untouched
  SymbolSeq y = cnn_forward(SampleSeq{x, 2}, m, CnnMode::infer);
  CHECK(y.size() == 4);
  for (Eigen::Index j = 0; j < 4; ++j)
    CHECK(y.values[j] == doctest::Approx(x[2 * j]).epsilon(1e-9));
}

TEST_CASE("selected config shape arithmetic: 1600 samples -> 800 symbols") {
  Rng rng(2);
  CnnModel m = random_cnn(selected_cnn_config(), 5);
  Eigen::ArrayXd x = random_array(1600, rng);
  SymbolSeq y = cnn_forward(SampleSeq{x, 2}, m, CnnMode::infer);
  CHECK(y.size() == 800);
}

TEST_CASE("cnn matches the explicit-loop oracle on random instances") {
  Rng rng(307);
  for (int trial = 0; trial < 30; ++trial) {
    CnnConfig cfg;
    cfg.layers = 2 + int(rng.below(3));
    cfg.kernel = 2 * int(rng.below(3)) + 3;
    cfg.channels = 1 + int(rng.below(4));
    cfg.parallel_symbols = 1 << rng.below(3);
    cfg.n_os = 2;
    cfg.padding = (cfg.kernel - 1) / 2 + int(rng.below(3));
    CnnModel m = random_cnn(cfg, 1000 + std::uint64_t(trial));
    const Eigen::Index group = Eigen::Index(cfg.parallel_symbols) * cfg.n_os;
    Eigen::ArrayXd x = random_array(group * Eigen::Index(4 + rng.below(5)), rng);
    SymbolSeq y = cnn_forward(SampleSeq{x, cfg.n_os}, m, CnnMode::infer);
    Eigen::ArrayXd oracle = CnnOracle{m}.forward(x);
    REQUIRE(y.size() == oracle.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
      CHECK(y.values[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
  }
}

TEST_CASE("cnn selected config matches the oracle including P=10 cropping") {
  CnnModel m = random_cnn(selected_cnn_config(), 42);
  Rng rng(43);
  Eigen::ArrayXd x = random_array(320, rng);
  SymbolSeq y = cnn_forward(SampleSeq{x, 2}, m, CnnMode::infer);
  Eigen::ArrayXd oracle = CnnOracle{m}.forward(x);
  REQUIRE(y.size() == oracle.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    CHECK(y.values[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
}

TEST_CASE("cnn infer is deterministic and shift equivariant") {
  CnnModel m = random_cnn(selected_cnn_config(), 77);
  Rng rng(78);
  Eigen::ArrayXd x = random_array(1600, rng);
  SymbolSeq y1 = cnn_forward(SampleSeq{x, 2}, m, CnnMode::infer);
  SymbolSeq y2 = cnn_forward(SampleSeq{x, 2}, m, CnnMode::infer);
  CHECK((y1.values == y2.values).all());

  // Shift by one group (V_p*N_os samples): outputs shift by V_p symbols in
  // the interior (borders change through the zero padding).
  const int group = 16, vp = 8;
  Eigen::ArrayXd shifted(x.size());
  shifted.head(x.size() - group) = x.tail(x.size() - group);
  shifted.tail(group).setZero();
  SymbolSeq ys = cnn_forward(SampleSeq{shifted, 2}, m, CnnMode::infer);
  const Eigen::Index margin = 80;
  for (Eigen::Index j = margin; j < y1.size() - margin - vp; ++j)
    CHECK(ys.values[j] == doctest::Approx(y1.values[j + vp]).epsilon(1e-12));
}

TEST_CASE("hidden activations are nonnegative after ReLU") {
  // Probed through the degenerate last layer: a single positive passthrough
  // weight on a 1-channel network keeps hidden activations visible.
  CnnConfig cfg;
  cfg.layers = 2;
  cfg.kernel = 1;
  cfg.channels = 1;
  cfg.parallel_symbols = 1;
  cfg.n_os = 1;
  cfg.padding = 0;
  Rng rng(5);
  CnnModel m = init_cnn(cfg, rng);
  m.layers[0].weight[0](0, 0) = 1.0;
  m.layers[1].weight[0](0, 0) = 1.0;  // identity readout of the hidden layer
  Rng xr(6);
  Eigen::ArrayXd x = random_array(64, xr);
  SymbolSeq y = cnn_forward(SampleSeq{x, 1}, m, CnnMode::infer);
  CHECK((y.values >= 0.0).all());
}

TEST_CASE("cnn rejects bad input lengths") {
  CnnModel m = random_cnn(selected_cnn_config(), 9);
  Rng rng(10);
  Eigen::ArrayXd x = random_array(100, rng);  // not a multiple of 16
  CHECK_THROWS_AS(cnn_forward(SampleSeq{x, 2}, m, CnnMode::infer), UsageError);
}

TEST_CASE("mac_per_symbol reproduces the selected operating point") {
  CHECK(mac_per_symbol(selected_cnn_config()) == 56.25);
  CnnConfig two_layer = selected_cnn_config();
  two_layer.layers = 2;
  // L=2 removes the middle term.
  CHECK(mac_per_symbol(two_layer) ==
        doctest::Approx(9.0 * 5 / 8 + 9.0 * 5 / 2));
  CnnConfig doubled = selected_cnn_config();
  doubled.channels = 10;
  const double base_first = 9.0 * 5 / 8;
  const double base_mid = 9.0 * 25 / 8;
  CHECK(mac_per_symbol(doubled) ==
        doctest::Approx(2 * base_first + 4 * base_mid + 9.0 * 10 / 2));
}

TEST_CASE("fir and volterra mac counts") {
  CHECK(mac_per_symbol_fir(57) == 57);
  const VolterraMacCount v = mac_per_symbol_volterra(3, 1, 1);
  CHECK(v.kernel_macs == 5);
  CHECK(v.with_power_products == 5 + 1 + 2);
  // Complexity-matched FIR for the selected CNN.
  CHECK(mac_per_symbol_fir(57) >= 56.25);
  CHECK(mac_per_symbol_fir(55) < 56.25);
}

TEST_CASE("receptive field matches the overlap formula in samples") {
  const CnnConfig cfg = selected_cnn_config();
  CHECK(cnn_receptive_field(cfg) == 137);  // 2*68 + 1
}
