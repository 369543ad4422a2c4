#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "eq/channels.hpp"
#include "eq/errors.hpp"
#include "eq/training.hpp"

using namespace eq;

namespace {

Eigen::ArrayXd random_array(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Eigen::ArrayXd a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = scale * (2.0 * rng.uniform() - 1.0);
  return a;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

// Central finite difference of a scalar function of one parameter.
double central_diff(const std::function<double()>& eval, double& param,
                    double h = 1e-4) {
  const double saved = param;
  param = saved + h;
  const double up = eval();
  param = saved - h;
  const double down = eval();
  param = saved;
  return (up - down) / (2.0 * h);
}

CnnConfig tiny_cnn_config() {
  CnnConfig cfg;
  cfg.layers = 3;
  cfg.kernel = 3;
  cfg.channels = 2;
  cfg.parallel_symbols = 2;
  cfg.n_os = 2;
  cfg.padding = 2;  // exercises the crop path
  cfg.bias = true;
  return cfg;
}

}  // namespace

TEST_CASE("mse examples") {
  Eigen::ArrayXd v = Eigen::ArrayXd::Ones(10);
  SymbolSeq a = make_pam2(v);
  CHECK(mse_loss(a, a) == 0.0);
  SymbolSeq b = make_pam2(v + 1.0);
  CHECK(mse_loss(b, a) == doctest::Approx(1.0));
  Rng rng(4);
  SymbolSeq c = make_pam2(random_array(10, rng));
  double direct = 0.0;
  for (Eigen::Index i = 0; i < 10; ++i)
    direct += (c.values[i] - a.values[i]) * (c.values[i] - a.values[i]);
  CHECK(mse_loss(c, a) == doctest::Approx(direct / 10.0).epsilon(1e-12));
  SymbolSeq shorter = make_pam2(Eigen::ArrayXd::Ones(9));
  CHECK_THROWS_AS(mse_loss(shorter, a), UsageError);
}

TEST_CASE("adam first step moves by roughly lr*sign(g); zero grad is a no-op") {
  AdamParams hp;
  hp.lr = 0.01;
  AdamState st;
  st.init(2);
  Eigen::ArrayXd p(2), g(2);
  p << 1.0, -2.0;
  g << 0.3, -0.7;
  adam_step(p, g, st, hp);
  CHECK(p[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.01 * 0.7 / (0.7 + 1e-8)).epsilon(1e-9));

  AdamState st0;
  st0.init(2);
  Eigen::ArrayXd q = p;
  adam_step(q, Eigen::ArrayXd::Zero(2), st0, hp);
  CHECK((q == p).all());

  // Determinism: identical state and inputs give identical trajectories.
  AdamState s1, s2;
  s1.init(2);
  s2.init(2);
  Eigen::ArrayXd p1 = p, p2 = p;
  for (int i = 0; i < 5; ++i) {
    adam_step(p1, g, s1, hp);
    adam_step(p2, g, s2, hp);
  }
  CHECK((p1 == p2).all());
}

TEST_CASE("fir gradient matches closed form and finite differences") {
  Rng rng(21);
  FirModel m;
  m.n_os = 2;
  m.weights = random_array(7, rng);
  SampleSeq x{random_array(40, rng), 2};
  Eigen::ArrayXd target = random_array(20, rng);

  Eigen::ArrayXd grad;
  const double loss = fir_loss_and_grad(m, x, target, grad);
  CHECK(std::isfinite(loss));

  // Closed form: (2/S) sum_j r_j x_{j*n_os + m - M*}.
  SymbolSeq soft = fir_forward(x, m);
  const int half = m.half();
  for (int t = 0; t < 7; ++t) {
    double expect = 0.0;
    for (Eigen::Index j = 0; j < 20; ++j) {
      const Eigen::Index idx = 2 * j + t - half;
      const double xv = (idx >= 0 && idx < x.size()) ? x.values[idx] : 0.0;
      expect += 2.0 / 20.0 * (soft.values[j] - target[j]) * xv;
    }
    CHECK(rel_err(grad[t], expect) < 1e-10);
  }

  for (int t = 0; t < 7; ++t) {
    auto eval = [&]() {
      Eigen::ArrayXd dummy;
      return fir_loss_and_grad(m, x, target, dummy);
    };
    const double fd = central_diff(eval, m.weights[t]);
    CHECK(rel_err(grad[t], fd) < 1e-4);
  }
}

TEST_CASE("zero-loss input gives zero fir gradient") {
  FirModel m;
  m.n_os = 1;
  m.weights = Eigen::ArrayXd::Zero(3);
  m.weights[1] = 1.0;
  Rng rng(5);
  Eigen::ArrayXd x = random_array(16, rng);
  Eigen::ArrayXd grad;
  const double loss = fir_loss_and_grad(m, SampleSeq{x, 1}, x, grad);
  CHECK(loss == 0.0);
  CHECK(grad.abs().maxCoeff() == 0.0);
}

TEST_CASE("volterra gradients match finite differences") {
  Rng rng(33);
  VolterraModel m = make_volterra(5, 3, 3);
  m.w0 = 0.1;
  m.w1 = random_array(5, rng, 0.5);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) m.w2(a, b) = 0.3 * (2 * rng.uniform() - 1);
  m.w3 = random_array(27, rng, 0.2);
  SampleSeq x{random_array(32, rng), 2};
  Eigen::ArrayXd target = random_array(16, rng);

  VolterraGrads g;
  volterra_loss_and_grad(m, x, target, g);
  auto eval = [&]() {
    VolterraGrads dummy;
    return volterra_loss_and_grad(m, x, target, dummy);
  };

  CHECK(rel_err(g.w0, central_diff(eval, m.w0)) < 1e-4);
  for (int t = 0; t < 5; ++t)
    CHECK(rel_err(g.w1[t], central_diff(eval, m.w1[t])) < 1e-4);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      CHECK(rel_err(g.w2(a, b), central_diff(eval, m.w2(a, b))) < 1e-4);
  for (Eigen::Index i = 0; i < 27; ++i)
    CHECK(rel_err(g.w3[i], central_diff(eval, m.w3[i])) < 1e-4);
}

TEST_CASE("cnn gradients match finite differences for every tensor kind") {
  const CnnConfig cfg = tiny_cnn_config();
  Rng rng(55);
  CnnModel model = init_cnn(cfg, rng);
  SampleSeq x{random_array(6 * 4, rng), 2};  // 6 groups of V_p*N_os = 4
  Eigen::ArrayXd target = random_array(x.size() / 2, rng);

  auto loss_eval = [&]() {
    CnnTape tape;
    cnn_train_forward(x, model, tape, /*update_running_stats=*/false);
    return (tape.soft - target).square().mean();
  };

  CnnTape tape;
  cnn_train_forward(x, model, tape, false);
  CnnGrads grads;
  grads.init_like(model);
  cnn_backward(model, tape,
               2.0 * (tape.soft - target) / double(tape.soft.size()), grads);

  int checked = 0;
  for (int l = 0; l < cfg.layers; ++l) {
    auto& layer = model.layers[size_t(l)];
    for (size_t o = 0; o < layer.weight.size(); ++o)
      for (Eigen::Index i = 0; i < layer.weight[o].size(); ++i) {
        const double fd = central_diff(loss_eval, layer.weight[o].data()[i]);
        CHECK(rel_err(grads.weight[size_t(l)][o].data()[i], fd) < 1e-4);
        ++checked;
      }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      const double fd = central_diff(loss_eval, layer.bias[i]);
      CHECK(rel_err(grads.bias[size_t(l)][i], fd) < 1e-4);
      ++checked;
    }
    for (Eigen::Index i = 0; i < layer.gamma.size(); ++i) {
      const double fd = central_diff(loss_eval, layer.gamma[i]);
      CHECK(rel_err(grads.gamma[size_t(l)][i], fd) < 1e-4);
      const double fdb = central_diff(loss_eval, layer.beta[i]);
      CHECK(rel_err(grads.beta[size_t(l)][i], fdb) < 1e-4);
      checked += 2;
    }
  }
  CHECK(checked > 50);  // the config exercises conv, bias and batch norm
}

TEST_CASE("training on a noiseless identity-like channel drives BER to zero") {
  ProakisBConfig ch;
  ch.snr_db = std::numeric_limits<double>::infinity();
  ch.rc_span = 0;  // trivial pulse

  EqualizerSpec spec;
  spec.family = EqualizerSpec::Family::fir;
  spec.fir_taps = 9;

  TrainConfig cfg;
  cfg.iterations = 300;
  cfg.batch_symbols = 256;
  cfg.eval_symbols = 0;
  cfg.final_eval_symbols = 20000;
  cfg.seeds = {1};

  TrainResult r = train(spec, ch, cfg, 1);
  CHECK_FALSE(r.diverged);
  // The 3-tap ISI at infinite SNR is equalized essentially perfectly.
  CHECK(r.final_ber < 1e-3);
}

TEST_CASE("train is deterministic under the seed") {
  ProakisBConfig ch;
  EqualizerSpec spec;
  spec.family = EqualizerSpec::Family::fir;
  spec.fir_taps = 7;
  TrainConfig cfg;
  cfg.iterations = 50;
  cfg.batch_symbols = 128;
  cfg.eval_symbols = 0;
  cfg.final_eval_symbols = 4000;
  TrainResult a = train(spec, ch, cfg, 9);
  TrainResult b = train(spec, ch, cfg, 9);
  CHECK((std::get<FirModel>(a.model).weights ==
         std::get<FirModel>(b.model).weights)
            .all());
  CHECK(a.final_ber == b.final_ber);
}

TEST_CASE("worst-of-n reports the maximum ber and the median") {
  ProakisBConfig ch;
  EqualizerSpec spec;
  spec.family = EqualizerSpec::Family::fir;
  spec.fir_taps = 5;
  TrainConfig cfg;
  cfg.iterations = 40;
  cfg.batch_symbols = 128;
  cfg.eval_symbols = 0;
  cfg.final_eval_symbols = 4000;

  cfg.seeds = {3};
  WorstOfN one = train_worst_of_n(spec, ch, cfg);
  TrainResult single = train(spec, ch, cfg, 3);
  CHECK(one.worst_ber == single.final_ber);  // n=1 equals train

  cfg.seeds = {3, 4, 5};
  WorstOfN three = train_worst_of_n(spec, ch, cfg);
  double mx = 0.0;
  for (const auto& r : three.runs) mx = std::max(mx, r.final_ber);
  CHECK(three.worst_ber == mx);
  CHECK(three.runs.size() == 3);

  WorstOfN again = train_worst_of_n(spec, ch, cfg);
  CHECK(again.worst_ber == three.worst_ber);  // deterministic seed list
}
