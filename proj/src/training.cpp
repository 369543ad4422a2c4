#include "eq/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "eq/cnn_detail.hpp"
#include "eq/errors.hpp"

namespace eq {

namespace {

constexpr double kBnMomentum = 0.1;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

Eigen::Map<Eigen::ArrayXd> flat(Eigen::MatrixXd& m) {
  return {m.data(), m.size()};
}

}  // namespace

double mse_loss(const SymbolSeq& soft, const SymbolSeq& target) {
  if (soft.size() != target.size())
    throw UsageError("mse_loss: length mismatch");
  return (soft.values - target.values).square().mean();
}

void adam_step(Eigen::Ref<Eigen::ArrayXd> params, const Eigen::ArrayXd& grads,
               AdamState& state, const AdamParams& hp) {
  state.step += 1;
  state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * grads;
  state.v = hp.beta2 * state.v + (1.0 - hp.beta2) * grads.square();
  const double c1 = 1.0 - std::pow(hp.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(hp.beta2, double(state.step));
  params -= hp.lr * (state.m / c1) / ((state.v / c2).sqrt() + hp.epsilon);
}

std::string EqualizerSpec::id() const {
  switch (family) {
    case Family::fir:
      return "fir_m" + std::to_string(fir_taps);
    case Family::volterra:
      return "volterra_" + std::to_string(volterra_taps[0]) + "_" +
             std::to_string(volterra_taps[1]) + "_" +
             std::to_string(volterra_taps[2]);
    case Family::cnn:
    default:
      return "cnn_vp" + std::to_string(cnn.parallel_symbols) + "_l" +
             std::to_string(cnn.layers) + "_k" + std::to_string(cnn.kernel) +
             "_c" + std::to_string(cnn.channels);
  }
}

double EqualizerSpec::mac() const {
  switch (family) {
    case Family::fir:
      return double(mac_per_symbol_fir(fir_taps));
    case Family::volterra:
      return double(
          mac_per_symbol_volterra(volterra_taps[0], volterra_taps[1],
                                  volterra_taps[2])
              .kernel_macs);
    case Family::cnn:
    default:
      return mac_per_symbol(cnn);
  }
}

int EqualizerSpec::n_os() const {
  return family == Family::cnn ? cnn.n_os : 2;
}

// ---------------------------------------------------------------------------
// CNN forward/backward with tape.

void CnnGrads::init_like(const CnnModel& model) {
  const int n = model.config.layers;
  weight.assign(size_t(n), {});
  bias.assign(size_t(n), {});
  gamma.assign(size_t(n), {});
  beta.assign(size_t(n), {});
  for (int l = 0; l < n; ++l) {
    const auto& layer = model.layers[size_t(l)];
    weight[size_t(l)].resize(layer.weight.size());
    for (size_t o = 0; o < layer.weight.size(); ++o)
      weight[size_t(l)][o] = Eigen::MatrixXd::Zero(layer.weight[o].rows(),
                                                   layer.weight[o].cols());
    bias[size_t(l)] = Eigen::ArrayXd::Zero(layer.bias.size());
    gamma[size_t(l)] = Eigen::ArrayXd::Zero(layer.gamma.size());
    beta[size_t(l)] = Eigen::ArrayXd::Zero(layer.beta.size());
  }
}

void CnnGrads::zero() {
  for (auto& lw : weight)
    for (auto& w : lw) w.setZero();
  for (auto& b : bias) b.setZero();
  for (auto& g : gamma) g.setZero();
  for (auto& b : beta) b.setZero();
}

void cnn_train_forward(const SampleSeq& samples, CnnModel& model, CnnTape& tape,
                       bool update_running_stats, CnnHooks* hooks) {
  const CnnConfig& cfg = model.config;
  const Eigen::Index group = Eigen::Index(cfg.parallel_symbols) * cfg.n_os;
  if (samples.size() == 0 || samples.size() % group != 0)
    throw UsageError("cnn_train_forward: input length must be a multiple of V_p*N_os");

  tape.layers.resize(size_t(cfg.layers));
  Eigen::MatrixXd x = samples.values.matrix().transpose();
  for (int l = 0; l < cfg.layers; ++l) {
    auto& layer = model.layers[size_t(l)];
    auto& lt = tape.layers[size_t(l)];
    lt.x = x;
    lt.geom = layer_geometry(cfg, l, x.cols());

    std::vector<Eigen::MatrixXd> w = layer.weight;
    if (hooks) hooks->transform_weights(l, w);
    lt.z = detail::conv1d(x, w, layer.bias, cfg.stride(l), cfg.pad(), lt.geom);

    if (layer.has_bn()) {
      const Eigen::Index n_cols = lt.z.cols();
      lt.mean.resize(lt.z.rows());
      lt.var.resize(lt.z.rows());
      lt.zhat.resizeLike(lt.z);
      Eigen::MatrixXd out(lt.z.rows(), n_cols);
      for (Eigen::Index c = 0; c < lt.z.rows(); ++c) {
        const double mean = lt.z.row(c).mean();
        const double var = (lt.z.row(c).array() - mean).square().mean();
        lt.mean[c] = mean;
        lt.var[c] = var;
        lt.zhat.row(c) = (lt.z.row(c).array() - mean) / std::sqrt(var + kBatchNormEps);
        out.row(c) = layer.gamma[c] * lt.zhat.row(c).array() + layer.beta[c];
        if (update_running_stats) {
          const double unbiased =
              n_cols > 1 ? var * double(n_cols) / double(n_cols - 1) : var;
          layer.running_mean[c] =
              (1.0 - kBnMomentum) * layer.running_mean[c] + kBnMomentum * mean;
          layer.running_var[c] =
              (1.0 - kBnMomentum) * layer.running_var[c] + kBnMomentum * unbiased;
        }
      }
      lt.act_pre = out.cwiseMax(0.0);
    } else {
      lt.act_pre = lt.z;
    }
    lt.act = lt.act_pre;
    if (hooks) hooks->transform_activation(l, lt.act);
    x = lt.act;
  }
  tape.soft = detail::flatten_interleaved(x);
}

void cnn_backward(const CnnModel& model, const CnnTape& tape,
                  const Eigen::ArrayXd& grad_soft, CnnGrads& grads,
                  CnnHooks* hooks) {
  const CnnConfig& cfg = model.config;
  Eigen::MatrixXd grad =
      detail::unflatten_interleaved(grad_soft, cfg.parallel_symbols);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& layer = model.layers[size_t(l)];
    const auto& lt = tape.layers[size_t(l)];

    // Hook transform on the layer output: adjoint observed by the hook,
    // values pass straight through.
    if (hooks) hooks->activation_backward(l, grad);

    if (layer.has_bn()) {
      // ReLU
      grad = (lt.act_pre.array() > 0.0).select(grad.array(), 0.0).matrix();
      // Batch norm with batch statistics.
      const Eigen::Index n = lt.z.cols();
      Eigen::MatrixXd grad_z(lt.z.rows(), n);
      for (Eigen::Index c = 0; c < lt.z.rows(); ++c) {
        const double inv_std = 1.0 / std::sqrt(lt.var[c] + kBatchNormEps);
        const Eigen::ArrayXd g = grad.row(c).array();
        const Eigen::ArrayXd zc = lt.z.row(c).array() - lt.mean[c];
        grads.gamma[size_t(l)][c] += (g * lt.zhat.row(c).array()).sum();
        grads.beta[size_t(l)][c] += g.sum();
        const Eigen::ArrayXd dzhat = g * layer.gamma[c];
        const double dvar =
            (dzhat * zc).sum() * (-0.5) * inv_std * inv_std * inv_std;
        const double dmean =
            -inv_std * dzhat.sum() + dvar * (-2.0 / double(n)) * zc.sum();
        grad_z.row(c) = (dzhat * inv_std + dvar * 2.0 / double(n) * zc +
                         dmean / double(n))
                            .matrix()
                            .transpose();
      }
      grad = std::move(grad_z);
    }

    // Conv uses the (possibly transformed) weights in both passes.
    std::vector<Eigen::MatrixXd> w = layer.weight;
    if (hooks) hooks->transform_weights(l, w);
    Eigen::ArrayXd grad_bias = Eigen::ArrayXd::Zero(layer.bias.size());
    std::vector<Eigen::MatrixXd> grad_w(w.size());
    for (size_t o = 0; o < w.size(); ++o)
      grad_w[o] = Eigen::MatrixXd::Zero(w[o].rows(), w[o].cols());
    Eigen::MatrixXd grad_x =
        detail::conv1d_backward(lt.x, w, grad, cfg.stride(l), cfg.pad(), lt.geom,
                                grad_w, grad_bias, l > 0);
    if (hooks) hooks->weights_backward(l, grad_w);
    for (size_t o = 0; o < w.size(); ++o) grads.weight[size_t(l)][o] += grad_w[o];
    if (layer.bias.size() > 0) grads.bias[size_t(l)] += grad_bias;
    grad = std::move(grad_x);
  }
}

void CnnAdam::init_like(const CnnModel& model) {
  const size_t n = model.layers.size();
  weight.assign(n, {});
  bias.assign(n, {});
  gamma.assign(n, {});
  beta.assign(n, {});
  for (size_t l = 0; l < n; ++l) {
    const auto& layer = model.layers[l];
    weight[l].resize(layer.weight.size());
    for (size_t o = 0; o < layer.weight.size(); ++o)
      weight[l][o].init(layer.weight[o].size());
    bias[l].init(layer.bias.size());
    gamma[l].init(layer.gamma.size());
    beta[l].init(layer.beta.size());
  }
}

void CnnAdam::update(CnnModel& model, const CnnGrads& grads,
                     const AdamParams& hp) {
  for (size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    for (size_t o = 0; o < layer.weight.size(); ++o) {
      Eigen::MatrixXd g = grads.weight[l][o];
      adam_step(flat(layer.weight[o]), Eigen::Map<Eigen::ArrayXd>(g.data(), g.size()),
                weight[l][o], hp);
    }
    if (layer.bias.size() > 0)
      adam_step(layer.bias, grads.bias[l], bias[l], hp);
    if (layer.has_bn()) {
      adam_step(layer.gamma, grads.gamma[l], gamma[l], hp);
      adam_step(layer.beta, grads.beta[l], beta[l], hp);
    }
  }
}

// ---------------------------------------------------------------------------
// Family-specific training loops.

namespace {

struct Batch {
  SymbolSeq symbols;
  SampleSeq samples;
};

Batch draw_batch(const ChannelConfig& channel, int n_symbols, Rng& rng) {
  Batch b;
  b.symbols = gen_symbols(n_symbols, pam2_constellation(), rng);
  b.samples = simulate(b.symbols, channel, rng);
  return b;
}

// dL/dy for the MSE loss.
Eigen::ArrayXd mse_grad(const Eigen::ArrayXd& soft, const Eigen::ArrayXd& target) {
  return 2.0 * (soft - target) / double(soft.size());
}

}  // namespace

double fir_loss_and_grad(const FirModel& model, const SampleSeq& samples,
                         const Eigen::ArrayXd& target, Eigen::ArrayXd& grad_w) {
  const Eigen::ArrayXd& x = samples.values;
  const int m = model.taps();
  const int half = model.half();
  const Eigen::Index n_sym = x.size() / model.n_os;
  const Eigen::VectorXd w = model.weights.matrix();

  Eigen::VectorXd gw = Eigen::VectorXd::Zero(m);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < n_sym; ++j) {
    Eigen::Index lo = j * model.n_os - half;
    Eigen::Index wa = 0, len = m;
    if (lo < 0) {
      wa = -lo;
      len -= wa;
      lo = 0;
    }
    if (lo + len > x.size()) len = x.size() - lo;
    const double y =
        len > 0 ? w.segment(wa, len).dot(x.matrix().segment(lo, len)) : 0.0;
    const double r = y - target[j];
    loss += r * r;
    const double d = 2.0 * r / double(n_sym);
    if (len > 0) gw.segment(wa, len) += d * x.matrix().segment(lo, len);
  }
  grad_w = gw.array();
  return loss / double(n_sym);
}

double volterra_loss_and_grad(const VolterraModel& model, const SampleSeq& samples,
                              const Eigen::ArrayXd& target, VolterraGrads& g) {
  const Eigen::ArrayXd& x = samples.values;
  const Eigen::Index n = x.size();
  const Eigen::Index n_sym = n / model.n_os;
  const int m1 = model.m1(), m2 = model.m2(), m3 = model.m3;
  const int h1 = m1 / 2, h2 = m2 / 2, h3 = m3 / 2;
  auto at = [&](Eigen::Index i) { return (i >= 0 && i < n) ? x[i] : 0.0; };

  g.w0 = 0.0;
  g.w1 = Eigen::ArrayXd::Zero(m1);
  g.w2 = Eigen::MatrixXd::Zero(m2, m2);
  g.w3 = Eigen::ArrayXd::Zero(Eigen::Index(m3) * m3 * m3);

  Eigen::ArrayXd win1(m1), win2(m2), win3(m3);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < n_sym; ++j) {
    const Eigen::Index c = j * model.n_os;
    for (int a = 0; a < m1; ++a) win1[a] = at(c + a - h1);
    for (int a = 0; a < m2; ++a) win2[a] = at(c + a - h2);
    for (int a = 0; a < m3; ++a) win3[a] = at(c + a - h3);

    double y = model.w0 + (win1 * model.w1).sum();
    y += win2.matrix().dot(model.w2 * win2.matrix());
    for (int a = 0; a < m3; ++a)
      for (int b = 0; b < m3; ++b) {
        const double xab = win3[a] * win3[b];
        for (int d = 0; d < m3; ++d)
          y += xab * win3[d] * model.w3_at(a, b, d);
      }

    const double r = y - target[j];
    loss += r * r;
    const double dd = 2.0 * r / double(n_sym);
    g.w0 += dd;
    g.w1 += dd * win1;
    g.w2 += dd * (win2.matrix() * win2.matrix().transpose());
    for (int a = 0; a < m3; ++a)
      for (int b = 0; b < m3; ++b) {
        const double xab = dd * win3[a] * win3[b];
        for (int d = 0; d < m3; ++d)
          g.w3[(Eigen::Index(a) * m3 + b) * m3 + d] += xab * win3[d];
      }
  }
  return loss / double(n_sym);
}

namespace {

EqualizerModel init_model(const EqualizerSpec& spec, Rng& rng) {
  switch (spec.family) {
    case EqualizerSpec::Family::fir: {
      FirModel m;
      m.n_os = spec.n_os();
      m.weights = Eigen::ArrayXd::Zero(spec.fir_taps);
      m.weights[spec.fir_taps / 2] = 1.0;  // passthrough start
      return m;
    }
    case EqualizerSpec::Family::volterra: {
      VolterraModel m = make_volterra(spec.volterra_taps[0], spec.volterra_taps[1],
                                      spec.volterra_taps[2], spec.n_os());
      m.w1[m.m1() / 2] = 1.0;
      return m;
    }
    case EqualizerSpec::Family::cnn:
    default: {
      Rng init_rng = rng.stream(0x1417);
      return init_cnn(spec.cnn, init_rng);
    }
  }
}

}  // namespace

SymbolSeq equalize(const EqualizerModel& model, const SampleSeq& samples) {
  if (std::holds_alternative<FirModel>(model))
    return fir_forward(samples, std::get<FirModel>(model));
  if (std::holds_alternative<VolterraModel>(model))
    return volterra_forward(samples, std::get<VolterraModel>(model));
  return cnn_forward(samples, std::get<CnnModel>(model), CnnMode::infer);
}

Eigen::Index ber_skip_symbols(const EqualizerModel& model) {
  if (std::holds_alternative<FirModel>(model)) {
    const auto& m = std::get<FirModel>(model);
    return m.half() / m.n_os + 1;
  }
  if (std::holds_alternative<VolterraModel>(model)) {
    const auto& m = std::get<VolterraModel>(model);
    const int mmax = std::max(m.m1(), std::max(m.m2(), m.m3));
    return mmax / 2 / m.n_os + 1;
  }
  const auto& m = std::get<CnnModel>(model);
  const long half_rf = (cnn_receptive_field(m.config) - 1) / 2;
  return half_rf / m.config.n_os + 2;  // +2 covers the crop alignment shift
}

double evaluate_ber_on(const EqualizerModel& model, const Dataset& ds) {
  SymbolSeq soft = equalize(model, ds.samples);
  SymbolSeq hard = decide(soft);
  const Eigen::Index skip = ber_skip_symbols(model);
  SymbolSeq ref = ds.symbols;
  ref.values.conservativeResize(hard.size());  // CNN output is length-exact
  return ber(hard, ref, skip, skip);
}

double evaluate_ber(const EqualizerModel& model, const ChannelConfig& channel,
                    Eigen::Index n_symbols, std::uint64_t seed) {
  // Round to a whole number of CNN passes so every family accepts it.
  Eigen::Index n = n_symbols;
  if (std::holds_alternative<CnnModel>(model)) {
    const auto& cfg = std::get<CnnModel>(model).config;
    const Eigen::Index group = cfg.parallel_symbols;
    n = (n + group - 1) / group * group;
  }
  Dataset ds = make_dataset(channel, n, seed);
  return evaluate_ber_on(model, ds);
}

TrainResult train(const EqualizerSpec& spec, const ChannelConfig& channel,
                  const TrainConfig& cfg, std::uint64_t seed) {
  if (cfg.iterations < 1) throw ConfigError("train: iterations must be >= 1");
  if (cfg.lr <= 0.0) throw ConfigError("train: learning rate must be positive");

  Rng run_rng(seed);
  Rng data_rng = run_rng.stream(0xDA7A);

  TrainResult result;
  result.seed = seed;
  result.model = init_model(spec, run_rng);
  result.loss_trace = Eigen::ArrayXd::Zero(cfg.iterations);

  // Held-out evaluation set, generated once and reused per checkpoint.
  Dataset eval_ds;
  if (cfg.eval_symbols > 0) {
    Eigen::Index n = cfg.eval_symbols;
    if (spec.family == EqualizerSpec::Family::cnn)
      n = (n + spec.cnn.parallel_symbols - 1) / spec.cnn.parallel_symbols *
          spec.cnn.parallel_symbols;
    eval_ds = make_dataset(channel, n, cfg.eval_seed);
  }

  const AdamParams hp{cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon};
  const double t0 = now_seconds();

  int batch_symbols = cfg.batch_symbols;
  if (spec.family == EqualizerSpec::Family::cnn) {
    const int group = spec.cnn.parallel_symbols;
    batch_symbols = (batch_symbols + group - 1) / group * group;
  }

  // Per-family optimizer state.
  AdamState fir_state, vol_w0, vol_w1, vol_w2, vol_w3;
  CnnAdam cnn_adam;
  CnnGrads cnn_grads;
  if (spec.family == EqualizerSpec::Family::fir) {
    fir_state.init(spec.fir_taps);
  } else if (spec.family == EqualizerSpec::Family::volterra) {
    auto& m = std::get<VolterraModel>(result.model);
    vol_w0.init(1);
    vol_w1.init(m.m1());
    vol_w2.init(Eigen::Index(m.m2()) * m.m2());
    vol_w3.init(m.w3.size());
  } else {
    cnn_adam.init_like(std::get<CnnModel>(result.model));
    cnn_grads.init_like(std::get<CnnModel>(result.model));
  }

  for (int it = 0; it < cfg.iterations; ++it) {
    Batch batch = draw_batch(channel, batch_symbols, data_rng);
    double loss = 0.0;

    if (spec.family == EqualizerSpec::Family::fir) {
      auto& m = std::get<FirModel>(result.model);
      Eigen::ArrayXd grad;
      loss = fir_loss_and_grad(m, batch.samples, batch.symbols.values, grad);
      if (!std::isfinite(loss)) {
        result.diverged = true;
        break;
      }
      adam_step(m.weights, grad, fir_state, hp);
    } else if (spec.family == EqualizerSpec::Family::volterra) {
      auto& m = std::get<VolterraModel>(result.model);
      VolterraGrads g;
      loss = volterra_loss_and_grad(m, batch.samples, batch.symbols.values, g);
      if (!std::isfinite(loss)) {
        result.diverged = true;
        break;
      }
      Eigen::ArrayXd w0(1), g0(1);
      w0 << m.w0;
      g0 << g.w0;
      adam_step(w0, g0, vol_w0, hp);
      m.w0 = w0[0];
      adam_step(m.w1, g.w1, vol_w1, hp);
      adam_step(flat(m.w2), Eigen::Map<Eigen::ArrayXd>(g.w2.data(), g.w2.size()),
                vol_w2, hp);
      adam_step(m.w3, g.w3, vol_w3, hp);
    } else {
      auto& m = std::get<CnnModel>(result.model);
      CnnTape tape;
      cnn_train_forward(batch.samples, m, tape, /*update_running_stats=*/true);
      loss = (tape.soft - batch.symbols.values).square().mean();
      if (!std::isfinite(loss)) {
        result.diverged = true;
        break;
      }
      cnn_grads.zero();
      cnn_backward(m, tape, mse_grad(tape.soft, batch.symbols.values), cnn_grads);
      cnn_adam.update(m, cnn_grads, hp);
    }

    result.loss_trace[it] = loss;
    if (cfg.eval_symbols > 0 &&
        ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations)) {
      result.ber_trace.emplace_back(it + 1, evaluate_ber_on(result.model, eval_ds));
      result.checkpoint_seconds.push_back(now_seconds() - t0);
    }
  }

  if (result.diverged) {
    result.final_ber = 1.0;
    return result;
  }
  result.final_ber = evaluate_ber(result.model, channel, cfg.final_eval_symbols,
                                  cfg.eval_seed + 1);
  return result;
}

WorstOfN train_worst_of_n(const EqualizerSpec& spec, const ChannelConfig& channel,
                          const TrainConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("train_worst_of_n: no seeds given");
  WorstOfN out;
  std::vector<double> converged;
  for (std::uint64_t seed : cfg.seeds) {
    out.runs.push_back(train(spec, channel, cfg, seed));
    const auto& r = out.runs.back();
    if (r.diverged)
      out.n_diverged += 1;
    else
      converged.push_back(r.final_ber);
  }
  if (converged.empty())
    throw TrainingError("train_worst_of_n: all " +
                        std::to_string(cfg.seeds.size()) + " runs diverged (" +
                        spec.id() + ")");
  out.worst_ber = *std::max_element(converged.begin(), converged.end());
  std::sort(converged.begin(), converged.end());
  out.median_ber = converged[converged.size() / 2];
  return out;
}

}  // namespace eq
