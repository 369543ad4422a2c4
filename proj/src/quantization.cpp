#include "eq/quantization.hpp"

#include <algorithm>
#include <cmath>

#include "eq/cnn_detail.hpp"
#include "eq/errors.hpp"

namespace eq {

namespace {

double quantize_integral(double x, bool is_signed, double int_bits,
                         double frac_bits) {
  const double step = std::exp2(-frac_bits);
  const double lo = is_signed ? -std::exp2(int_bits) : 0.0;
  const double hi = std::exp2(int_bits) - step;
  const double q = std::nearbyint(x / step) * step;
  return std::clamp(q, lo, hi);
}

}  // namespace

bool FixedFormat::integral() const {
  return int_bits == std::floor(int_bits) && frac_bits == std::floor(frac_bits) &&
         int_bits >= 0.0 && frac_bits >= 0.0;
}

double quantize_value(double x, const FixedFormat& fmt) {
  if (!fmt.integral())
    throw UsageError("quantize_value: widths must be nonnegative integers");
  return quantize_integral(x, fmt.is_signed, fmt.int_bits, fmt.frac_bits);
}

Eigen::ArrayXd quantize_array(const Eigen::ArrayXd& x, const FixedFormat& fmt) {
  Eigen::ArrayXd y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = quantize_value(x[i], fmt);
  return y;
}

double fake_quantize(double x, const FixedFormat& fmt) {
  const double i0 = std::floor(fmt.int_bits);
  const double f0 = std::floor(fmt.frac_bits);
  const double ti = fmt.int_bits - i0;
  const double tf = fmt.frac_bits - f0;
  const double q00 = quantize_integral(x, fmt.is_signed, i0, f0);
  const double q01 = tf > 0.0 ? quantize_integral(x, fmt.is_signed, i0, f0 + 1) : q00;
  const double lo0 = (1.0 - tf) * q00 + tf * q01;
  if (ti == 0.0) return lo0;
  const double q10 = quantize_integral(x, fmt.is_signed, i0 + 1, f0);
  const double q11 = tf > 0.0 ? quantize_integral(x, fmt.is_signed, i0 + 1, f0 + 1) : q10;
  const double hi0 = (1.0 - tf) * q10 + tf * q11;
  return (1.0 - ti) * lo0 + ti * hi0;
}

WidthGrad fake_quantize_width_grad(double x, const FixedFormat& fmt) {
  const double i0 = std::floor(fmt.int_bits);
  const double f0 = std::floor(fmt.frac_bits);
  const double ti = fmt.int_bits - i0;
  const double tf = fmt.frac_bits - f0;
  const double q00 = quantize_integral(x, fmt.is_signed, i0, f0);
  const double q01 = quantize_integral(x, fmt.is_signed, i0, f0 + 1);
  const double q10 = quantize_integral(x, fmt.is_signed, i0 + 1, f0);
  const double q11 = quantize_integral(x, fmt.is_signed, i0 + 1, f0 + 1);
  WidthGrad g;
  g.d_frac = (1.0 - ti) * (q01 - q00) + ti * (q11 - q10);
  g.d_int = ((1.0 - tf) * q10 + tf * q11) - ((1.0 - tf) * q00 + tf * q01);
  return g;
}

double mean_param_bits(const std::vector<LayerFormats>& formats) {
  double sum = 0.0;
  for (const auto& f : formats) sum += f.weights.total_bits();
  return sum / double(formats.size());
}

double mean_activation_bits(const std::vector<LayerFormats>& formats) {
  double sum = 0.0;
  for (const auto& f : formats) sum += f.activations.total_bits();
  return sum / double(formats.size());
}

double qat_loss(const SymbolSeq& soft, const SymbolSeq& target, double qlf,
                const std::vector<LayerFormats>& formats) {
  return mse_loss(soft, target) +
         qlf * (mean_param_bits(formats) + mean_activation_bits(formats)) / 2.0;
}

void QatConfig::validate() const {
  if (!(0 < phase1_end && phase1_end < phase2_end && phase2_end < total_iters))
    throw ConfigError("qat: phase boundaries must be increasing");
  if (qlf < 0.0) throw ConfigError("qat: qlf must be >= 0");
}

// ---------------------------------------------------------------------------
// Quantized inference.

namespace {

// Folds batch norm (running statistics) into per-output-channel weight
// scale and bias. Mathematically exact.
void fold_layer(const CnnModel::Layer& layer, std::vector<Eigen::MatrixXd>& w,
                Eigen::ArrayXd& b) {
  w = layer.weight;
  const Eigen::Index out_c = Eigen::Index(w.size());
  b = layer.bias.size() > 0 ? layer.bias : Eigen::ArrayXd::Zero(out_c);
  if (!layer.has_bn()) return;
  for (Eigen::Index o = 0; o < out_c; ++o) {
    const double scale =
        layer.gamma[o] / std::sqrt(layer.running_var[o] + kBatchNormEps);
    w[size_t(o)] *= scale;
    b[o] = layer.beta[o] + scale * (b[o] - layer.running_mean[o]);
  }
}

void fake_quantize_inplace(Eigen::MatrixXd& m, const FixedFormat& fmt) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = fake_quantize(m.data()[i], fmt);
}

// Shared quantized pipeline: conv (already-quantized weights), ReLU on
// hidden layers, per-layer output quantization.
SymbolSeq quant_pipeline(const SampleSeq& samples, const CnnConfig& cfg,
                         const std::vector<std::vector<Eigen::MatrixXd>>& weights,
                         const std::vector<Eigen::ArrayXd>& biases,
                         const std::vector<LayerFormats>& formats) {
  const Eigen::Index group = Eigen::Index(cfg.parallel_symbols) * cfg.n_os;
  if (samples.size() == 0 || samples.size() % group != 0)
    throw UsageError("quantized forward: input length must be a multiple of V_p*N_os");
  Eigen::MatrixXd x = samples.values.matrix().transpose();
  for (int l = 0; l < cfg.layers; ++l) {
    const LayerGeometry geom = layer_geometry(cfg, l, x.cols());
    Eigen::MatrixXd z = detail::conv1d(x, weights[size_t(l)], biases[size_t(l)],
                                       cfg.stride(l), cfg.pad(), geom);
    if (l + 1 < cfg.layers) z = z.cwiseMax(0.0);
    const FixedFormat& af = formats[size_t(l)].activations;
    for (Eigen::Index i = 0; i < z.size(); ++i)
      z.data()[i] = fake_quantize(z.data()[i], af);
    x = std::move(z);
  }
  return make_pam2(detail::flatten_interleaved(x));
}

}  // namespace

SymbolSeq quant_infer_forward(const SampleSeq& samples, const CnnModel& model,
                              const std::vector<LayerFormats>& formats) {
  const CnnConfig& cfg = model.config;
  std::vector<std::vector<Eigen::MatrixXd>> weights(size_t(cfg.layers));
  std::vector<Eigen::ArrayXd> biases(size_t(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    fold_layer(model.layers[size_t(l)], weights[size_t(l)], biases[size_t(l)]);
    const FixedFormat& wf = formats[size_t(l)].weights;
    for (auto& w : weights[size_t(l)]) fake_quantize_inplace(w, wf);
    // Folded bias keeps the weight grid but may need more integer bits.
    FixedFormat bf = wf;
    const double maxabs = biases[size_t(l)].abs().maxCoeff();
    while (std::exp2(std::floor(bf.int_bits)) <= maxabs && bf.int_bits < 32.0)
      bf.int_bits += 1.0;
    for (Eigen::Index o = 0; o < biases[size_t(l)].size(); ++o)
      biases[size_t(l)][o] = fake_quantize(biases[size_t(l)][o], bf);
  }
  return quant_pipeline(samples, cfg, weights, biases, formats);
}

SymbolSeq quantized_cnn_forward(const SampleSeq& samples, const QuantizedCnn& q) {
  const CnnConfig& cfg = q.model.config;
  std::vector<std::vector<Eigen::MatrixXd>> weights(size_t(cfg.layers));
  std::vector<Eigen::ArrayXd> biases(size_t(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    weights[size_t(l)] = q.model.layers[size_t(l)].weight;
    biases[size_t(l)] = q.model.layers[size_t(l)].bias;
  }
  return quant_pipeline(samples, cfg, weights, biases, q.formats);
}

QuantizedCnn freeze(const CnnModel& model, std::vector<LayerFormats> formats) {
  QuantizedCnn q;
  q.model.config = model.config;
  q.model.config.bias = true;  // folding introduces a bias term
  for (auto& f : formats) {
    f.weights.int_bits = std::ceil(f.weights.int_bits);
    f.weights.frac_bits = std::ceil(f.weights.frac_bits);
    f.activations.int_bits = std::ceil(f.activations.int_bits);
    f.activations.frac_bits = std::ceil(f.activations.frac_bits);
  }
  q.formats = formats;
  q.model.layers.resize(model.layers.size());
  q.bias_formats.resize(model.layers.size());
  for (size_t l = 0; l < model.layers.size(); ++l) {
    auto& out = q.model.layers[l];
    fold_layer(model.layers[l], out.weight, out.bias);
    const FixedFormat& wf = formats[l].weights;
    for (auto& w : out.weight)
      for (Eigen::Index i = 0; i < w.size(); ++i)
        w.data()[i] = quantize_value(w.data()[i], wf);
    FixedFormat bf = wf;
    const double maxabs = out.bias.abs().maxCoeff();
    while (std::exp2(bf.int_bits) <= maxabs && bf.int_bits < 32.0)
      bf.int_bits += 1.0;
    out.bias = quantize_array(out.bias, bf);
    q.bias_formats[l] = bf;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Three-phase quantization-aware training.

namespace {

// Fake-quantizes weights and activations during the training-mode forward
// and accumulates the width adjoints on the way back.
class QatHooks : public CnnHooks {
 public:
  QatHooks(const CnnConfig& cfg, std::vector<LayerFormats>* formats)
      : formats_(formats) {
    raw_w_.resize(size_t(cfg.layers));
    raw_a_.resize(size_t(cfg.layers));
    width_grads_.assign(size_t(cfg.layers), {});
  }

  bool collect_width_grads = false;

  struct LayerWidthGrad {
    double w_int = 0.0, w_frac = 0.0, a_int = 0.0, a_frac = 0.0;
  };

  void reset_width_grads() { width_grads_.assign(width_grads_.size(), {}); }
  const std::vector<LayerWidthGrad>& width_grads() const { return width_grads_; }

  void transform_weights(int layer, std::vector<Eigen::MatrixXd>& w) override {
    raw_w_[size_t(layer)] = w;
    const FixedFormat& f = (*formats_)[size_t(layer)].weights;
    for (auto& m : w) fake_quantize_inplace(m, f);
  }

  void weights_backward(int layer,
                        const std::vector<Eigen::MatrixXd>& grad) override {
    if (!collect_width_grads) return;
    const FixedFormat& f = (*formats_)[size_t(layer)].weights;
    auto& acc = width_grads_[size_t(layer)];
    const auto& raw = raw_w_[size_t(layer)];
    for (size_t o = 0; o < grad.size(); ++o)
      for (Eigen::Index i = 0; i < grad[o].size(); ++i) {
        const double g = grad[o].data()[i];
        if (g == 0.0) continue;
        const WidthGrad wg = fake_quantize_width_grad(raw[o].data()[i], f);
        acc.w_int += g * wg.d_int;
        acc.w_frac += g * wg.d_frac;
      }
  }

  void transform_activation(int layer, Eigen::MatrixXd& a) override {
    raw_a_[size_t(layer)] = a;
    const FixedFormat& f = (*formats_)[size_t(layer)].activations;
    fake_quantize_inplace(a, f);
  }

  void activation_backward(int layer, const Eigen::MatrixXd& grad) override {
    if (!collect_width_grads) return;
    const FixedFormat& f = (*formats_)[size_t(layer)].activations;
    auto& acc = width_grads_[size_t(layer)];
    const auto& raw = raw_a_[size_t(layer)];
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      const double g = grad.data()[i];
      if (g == 0.0) continue;
      const WidthGrad wg = fake_quantize_width_grad(raw.data()[i], f);
      acc.a_int += g * wg.d_int;
      acc.a_frac += g * wg.d_frac;
    }
  }

 private:
  std::vector<LayerFormats>* formats_;
  std::vector<std::vector<Eigen::MatrixXd>> raw_w_;
  std::vector<Eigen::MatrixXd> raw_a_;
  std::vector<LayerWidthGrad> width_grads_;
};

}  // namespace

QatResult qat_train(const CnnConfig& config, const ChannelConfig& channel,
                    const QatConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  config.validate();

  Rng run_rng(seed);
  Rng data_rng = run_rng.stream(0xDA7A);
  Rng init_rng = run_rng.stream(0x1417);

  QatResult result;
  result.seed = seed;
  result.model = init_cnn(config, init_rng);
  CnnModel& model = result.model;

  const int n_layers = config.layers;
  std::vector<LayerFormats> formats(size_t(n_layers));
  for (int l = 0; l < n_layers; ++l) {
    formats[size_t(l)].weights =
        FixedFormat{true, cfg.init_int_bits, cfg.init_frac_bits};
    // Hidden activations are nonnegative after ReLU; the last layer output
    // is a soft PAM2 symbol and keeps its sign.
    formats[size_t(l)].activations =
        FixedFormat{l == n_layers - 1, cfg.init_int_bits, cfg.init_frac_bits};
  }

  QatHooks hooks(config, &formats);
  CnnGrads grads;
  grads.init_like(model);
  CnnAdam adam;
  adam.init_like(model);
  const AdamParams hp{cfg.base.lr, cfg.base.beta1, cfg.base.beta2,
                      cfg.base.epsilon};
  const AdamParams width_hp{cfg.base.lr * cfg.width_lr_scale, cfg.base.beta1,
                            cfg.base.beta2, cfg.base.epsilon};

  // Widths packed per layer as [w_int, w_frac, a_int, a_frac].
  Eigen::ArrayXd widths(4 * n_layers);
  for (int l = 0; l < n_layers; ++l) {
    widths[4 * l + 0] = formats[size_t(l)].weights.int_bits;
    widths[4 * l + 1] = formats[size_t(l)].weights.frac_bits;
    widths[4 * l + 2] = formats[size_t(l)].activations.int_bits;
    widths[4 * l + 3] = formats[size_t(l)].activations.frac_bits;
  }
  AdamState width_state;
  width_state.init(widths.size());

  auto sync_formats = [&]() {
    for (int l = 0; l < n_layers; ++l) {
      formats[size_t(l)].weights.int_bits = widths[4 * l + 0];
      formats[size_t(l)].weights.frac_bits = widths[4 * l + 1];
      formats[size_t(l)].activations.int_bits = widths[4 * l + 2];
      formats[size_t(l)].activations.frac_bits = widths[4 * l + 3];
    }
  };

  int batch_symbols = cfg.base.batch_symbols;
  batch_symbols = (batch_symbols + config.parallel_symbols - 1) /
                  config.parallel_symbols * config.parallel_symbols;

  Eigen::Index eval_n = cfg.base.eval_symbols;
  eval_n = (eval_n + config.parallel_symbols - 1) / config.parallel_symbols *
           config.parallel_symbols;
  Dataset eval_ds = make_dataset(channel, eval_n, cfg.base.eval_seed);
  const Eigen::Index skip = (cnn_receptive_field(config) - 1) / 2 / config.n_os + 2;

  auto trace_ber = [&]() {
    SymbolSeq hard = decide(quant_infer_forward(eval_ds.samples, model, formats));
    return ber(hard, eval_ds.symbols, skip, skip);
  };

  auto push_trace = [&](int iteration, int phase, double loss) {
    QatTraceRow row;
    row.iteration = iteration;
    row.phase = phase;
    for (int l = 0; l < n_layers; ++l) {
      row.weight_int.push_back(formats[size_t(l)].weights.int_bits);
      row.weight_frac.push_back(formats[size_t(l)].weights.frac_bits);
      row.act_int.push_back(formats[size_t(l)].activations.int_bits);
      row.act_frac.push_back(formats[size_t(l)].activations.frac_bits);
    }
    row.b_p = mean_param_bits(formats);
    row.b_a = mean_activation_bits(formats);
    row.loss = loss;
    row.ber = trace_ber();
    result.trace.push_back(row);
  };

  for (int it = 0; it < cfg.total_iters; ++it) {
    const int phase = it < cfg.phase1_end ? 1 : (it < cfg.phase2_end ? 2 : 3);
    if (it == cfg.phase2_end) {
      // Entering fine-tuning: record the learned widths, then fix every
      // width to the next highest integer.
      result.learned = formats;
      for (Eigen::Index i = 0; i < widths.size(); ++i)
        widths[i] = std::ceil(widths[i]);
      sync_formats();
      result.frozen_formats = formats;
    }

    SymbolSeq symbols = gen_symbols(batch_symbols, pam2_constellation(), data_rng);
    SampleSeq samples = simulate(symbols, channel, data_rng);

    hooks.collect_width_grads = (phase == 2);
    hooks.reset_width_grads();

    CnnTape tape;
    cnn_train_forward(samples, model, tape, /*update_running_stats=*/true, &hooks);
    const double mse = (tape.soft - symbols.values).square().mean();
    const double loss =
        mse + cfg.qlf * (mean_param_bits(formats) + mean_activation_bits(formats)) / 2.0;
    if (!std::isfinite(loss)) {
      result.diverged = true;
      break;
    }

    grads.zero();
    Eigen::ArrayXd grad_soft = 2.0 * (tape.soft - symbols.values) /
                               double(tape.soft.size());
    cnn_backward(model, tape, grad_soft, grads, &hooks);
    adam.update(model, grads, hp);

    if (phase == 2) {
      Eigen::ArrayXd wg(4 * n_layers);
      const double penalty = cfg.qlf / (2.0 * n_layers);
      const auto& hooks_g = hooks.width_grads();
      for (int l = 0; l < n_layers; ++l) {
        wg[4 * l + 0] = hooks_g[size_t(l)].w_int + penalty;
        wg[4 * l + 1] = hooks_g[size_t(l)].w_frac + penalty;
        wg[4 * l + 2] = hooks_g[size_t(l)].a_int + penalty;
        wg[4 * l + 3] = hooks_g[size_t(l)].a_frac + penalty;
      }
      adam_step(widths, wg, width_state, width_hp);
      for (Eigen::Index i = 0; i < widths.size(); ++i)
        widths[i] = std::clamp(widths[i], 0.0, 16.0);
      // A format collapsing to zero total width is clamped at one bit.
      for (int l = 0; l < n_layers; ++l) {
        for (int pair = 0; pair < 2; ++pair) {
          double& ib = widths[4 * l + 2 * pair];
          double& fb = widths[4 * l + 2 * pair + 1];
          if (ib + fb < 1.0) {
            fb = 1.0 - ib;
            result.width_clamped = true;
          }
        }
      }
      sync_formats();
    }

    if ((it + 1) % cfg.base.eval_every == 0 || it + 1 == cfg.total_iters ||
        it + 1 == cfg.phase1_end || it + 1 == cfg.phase2_end)
      push_trace(it + 1, phase, loss);
  }

  if (result.diverged) return result;

  if (result.learned.empty()) result.learned = formats;
  if (result.frozen_formats.empty()) result.frozen_formats = formats;
  result.frozen = freeze(model, result.frozen_formats);

  Eigen::Index n = cfg.base.final_eval_symbols;
  n = (n + config.parallel_symbols - 1) / config.parallel_symbols *
      config.parallel_symbols;
  Dataset final_ds = make_dataset(channel, n, cfg.base.eval_seed + 1);
  SymbolSeq hard = decide(quantized_cnn_forward(final_ds.samples, result.frozen));
  result.final_ber = ber(hard, final_ds.symbols, skip, skip);
  return result;
}

}  // namespace eq
