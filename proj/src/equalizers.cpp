#include "eq/equalizers.hpp"

#include <cmath>
#include <string>

#include "eq/cnn_detail.hpp"
#include "eq/errors.hpp"

namespace eq {

SymbolSeq fir_forward(const SampleSeq& samples, const FirModel& model) {
  const int m = model.taps();
  if (m % 2 == 0) throw ConfigError("fir: tap count must be odd");
  const int half = model.half();
  const Eigen::ArrayXd& x = samples.values;
  const Eigen::Index n_sym = x.size() / model.n_os;

  Eigen::ArrayXd y(n_sym);
  const Eigen::VectorXd w = model.weights.matrix();
  for (Eigen::Index j = 0; j < n_sym; ++j) {
    const Eigen::Index center = j * model.n_os;
    Eigen::Index lo = center - half;           // window [lo, lo + m)
    Eigen::Index wa = 0, len = m;
    if (lo < 0) {
      wa = -lo;
      len -= wa;
      lo = 0;
    }
    if (lo + len > x.size()) len = x.size() - lo;
    y[j] = (len > 0)
               ? w.segment(wa, len).dot(x.matrix().segment(lo, len))
               : 0.0;
  }
  SymbolSeq out = make_pam2(std::move(y));
  return out;
}

VolterraModel make_volterra(int m1, int m2, int m3, int n_os) {
  // Odd kernels center on the symbol; even kernels (which the tap grid
  // contains) get one extra trailing tap via the floor'd half-width.
  auto check = [](int m, const char* name) {
    if (m < 1)
      throw ConfigError(std::string("volterra: ") + name + " must be >= 1");
  };
  check(m1, "M1");
  check(m2, "M2");
  check(m3, "M3");
  VolterraModel v;
  v.w1 = Eigen::ArrayXd::Zero(m1);
  v.w2 = Eigen::MatrixXd::Zero(m2, m2);
  v.w3 = Eigen::ArrayXd::Zero(Eigen::Index(m3) * m3 * m3);
  v.m3 = m3;
  v.n_os = n_os;
  return v;
}

SymbolSeq volterra_forward(const SampleSeq& samples, const VolterraModel& model) {
  const Eigen::ArrayXd& x = samples.values;
  const Eigen::Index n = x.size();
  const Eigen::Index n_sym = n / model.n_os;
  const int m1 = model.m1(), m2 = model.m2(), m3 = model.m3;
  const int h1 = m1 / 2, h2 = m2 / 2, h3 = m3 / 2;

  auto at = [&](Eigen::Index i) { return (i >= 0 && i < n) ? x[i] : 0.0; };

  Eigen::ArrayXd y(n_sym);
  Eigen::ArrayXd win2(m2), win3(m3);
  for (Eigen::Index j = 0; j < n_sym; ++j) {
    const Eigen::Index c = j * model.n_os;
    double acc = model.w0;
    for (int a = 0; a < m1; ++a) acc += at(c + a - h1) * model.w1[a];
    if (m2 > 1 || model.w2(0, 0) != 0.0) {
      for (int a = 0; a < m2; ++a) win2[a] = at(c + a - h2);
      acc += win2.matrix().dot(model.w2 * win2.matrix());
    }
    if (m3 > 1 || model.w3[0] != 0.0) {
      for (int a = 0; a < m3; ++a) win3[a] = at(c + a - h3);
      for (int a = 0; a < m3; ++a) {
        const double xa = win3[a];
        if (xa == 0.0) continue;
        for (int b = 0; b < m3; ++b) {
          const double xab = xa * win3[b];
          if (xab == 0.0) continue;
          for (int d = 0; d < m3; ++d)
            acc += xab * win3[d] * model.w3_at(a, b, d);
        }
      }
    }
    y[j] = acc;
  }
  return make_pam2(std::move(y));
}

void CnnConfig::validate() const {
  if (layers < 2) throw ConfigError("cnn: need at least 2 layers");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("cnn: kernel must be odd");
  if (channels < 1 || parallel_symbols < 1 || n_os < 1)
    throw ConfigError("cnn: channels, V_p and N_os must be positive");
  if (pad() < (kernel - 1) / 2)
    throw ConfigError("cnn: padding below (K-1)/2 would shrink the feature map");
}

CnnConfig selected_cnn_config() {
  CnnConfig c;
  c.layers = 3;
  c.kernel = 9;
  c.channels = 5;
  c.parallel_symbols = 8;
  c.n_os = 2;
  c.padding = 10;
  c.bias = false;
  return c;
}

void CnnModel::validate() const {
  config.validate();
  if (int(layers.size()) != config.layers)
    throw ConfigError("cnn model: layer count mismatch");
  for (int l = 0; l < config.layers; ++l) {
    const auto& layer = layers[l];
    if (int(layer.weight.size()) != config.out_channels(l))
      throw ConfigError("cnn model: output channel mismatch in layer " +
                        std::to_string(l));
    for (const auto& w : layer.weight)
      if (w.rows() != config.in_channels(l) || w.cols() != config.kernel)
        throw ConfigError("cnn model: kernel shape mismatch in layer " +
                          std::to_string(l));
    const bool hidden = l + 1 < config.layers;
    if (hidden != layer.has_bn())
      throw ConfigError("cnn model: batch norm expected on hidden layers only");
    if (layer.has_bn() && (layer.running_var <= 0.0).any())
      throw ConfigError("cnn model: batch-norm variance must be positive");
  }
}

CnnModel init_cnn(const CnnConfig& config, Rng& rng) {
  config.validate();
  CnnModel model;
  model.config = config;
  model.layers.resize(config.layers);
  for (int l = 0; l < config.layers; ++l) {
    auto& layer = model.layers[l];
    const int in_c = config.in_channels(l);
    const int out_c = config.out_channels(l);
    const double bound = 1.0 / std::sqrt(double(in_c) * config.kernel);
    layer.weight.resize(out_c);
    for (auto& w : layer.weight) {
      w.resize(in_c, config.kernel);
      for (Eigen::Index i = 0; i < w.size(); ++i)
        w.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
    }
    if (config.bias) layer.bias = Eigen::ArrayXd::Zero(out_c);
    if (l + 1 < config.layers) {
      layer.gamma = Eigen::ArrayXd::Ones(out_c);
      layer.beta = Eigen::ArrayXd::Zero(out_c);
      layer.running_mean = Eigen::ArrayXd::Zero(out_c);
      layer.running_var = Eigen::ArrayXd::Ones(out_c);
    }
  }
  return model;
}

LayerGeometry layer_geometry(const CnnConfig& config, int layer,
                             Eigen::Index in_width) {
  const int stride = config.stride(layer);
  const int pad = config.pad();
  if (in_width % stride != 0)
    throw UsageError("cnn: layer " + std::to_string(layer) + " input width " +
                     std::to_string(in_width) + " not divisible by stride " +
                     std::to_string(stride));
  const Eigen::Index nominal = in_width / stride;
  const Eigen::Index full =
      (in_width + 2 * Eigen::Index(pad) - config.kernel) / stride + 1;
  const Eigen::Index extra = full - nominal;
  if (extra < 0)
    throw ConfigError("cnn: padding too small for nominal output width");
  // Extra padded positions extend the map symmetrically; drop them evenly,
  // front-biased down. This keeps output alignment independent of length.
  return LayerGeometry{nominal, extra / 2};
}

namespace detail {

Eigen::MatrixXd conv1d(const Eigen::MatrixXd& x,
                       const std::vector<Eigen::MatrixXd>& weight,
                       const Eigen::ArrayXd& bias, int stride, int pad,
                       const LayerGeometry& geom) {
  const Eigen::Index in_w = x.cols();
  const Eigen::Index out_c = Eigen::Index(weight.size());
  const Eigen::Index k = weight[0].cols();
  Eigen::MatrixXd y(out_c, geom.width_nominal);
  for (Eigen::Index j = 0; j < geom.width_nominal; ++j) {
    const Eigen::Index start = (j + geom.crop_front) * stride - pad;
    Eigen::Index k_lo = 0, k_hi = k;
    if (start < 0) k_lo = -start;
    if (start + k > in_w) k_hi = in_w - start;
    if (k_lo >= k_hi) {
      y.col(j).setZero();
    } else {
      const auto block = x.middleCols(start + k_lo, k_hi - k_lo);
      for (Eigen::Index o = 0; o < out_c; ++o)
        y(o, j) =
            weight[size_t(o)].middleCols(k_lo, k_hi - k_lo).cwiseProduct(block).sum();
    }
    if (bias.size() > 0) y.col(j) += bias.matrix();
  }
  return y;
}

Eigen::MatrixXd conv1d_backward(const Eigen::MatrixXd& x,
                                const std::vector<Eigen::MatrixXd>& weight,
                                const Eigen::MatrixXd& grad_out, int stride,
                                int pad, const LayerGeometry& geom,
                                std::vector<Eigen::MatrixXd>& grad_w,
                                Eigen::ArrayXd& grad_b, bool need_grad_x) {
  const Eigen::Index in_w = x.cols();
  const Eigen::Index out_c = Eigen::Index(weight.size());
  const Eigen::Index k = weight[0].cols();
  Eigen::MatrixXd grad_x;
  if (need_grad_x) grad_x = Eigen::MatrixXd::Zero(x.rows(), in_w);
  for (Eigen::Index j = 0; j < grad_out.cols(); ++j) {
    const Eigen::Index start = (j + geom.crop_front) * stride - pad;
    Eigen::Index k_lo = 0, k_hi = k;
    if (start < 0) k_lo = -start;
    if (start + k > in_w) k_hi = in_w - start;
    if (k_lo >= k_hi) continue;
    const Eigen::Index cols = k_hi - k_lo;
    const auto block = x.middleCols(start + k_lo, cols);
    for (Eigen::Index o = 0; o < out_c; ++o) {
      const double g = grad_out(o, j);
      if (g == 0.0) continue;
      grad_w[size_t(o)].middleCols(k_lo, cols) += g * block;
      if (need_grad_x)
        grad_x.middleCols(start + k_lo, cols) +=
            g * weight[size_t(o)].middleCols(k_lo, cols);
    }
  }
  if (grad_b.size() > 0)
    for (Eigen::Index o = 0; o < out_c; ++o) grad_b[o] += grad_out.row(o).sum();
  return grad_x;
}

Eigen::ArrayXd flatten_interleaved(const Eigen::MatrixXd& feature_map) {
  const Eigen::Index v_p = feature_map.rows();
  const Eigen::Index j_n = feature_map.cols();
  Eigen::ArrayXd out(v_p * j_n);
  for (Eigen::Index j = 0; j < j_n; ++j)
    for (Eigen::Index o = 0; o < v_p; ++o) out[j * v_p + o] = feature_map(o, j);
  return out;
}

Eigen::MatrixXd unflatten_interleaved(const Eigen::ArrayXd& symbols, int v_p) {
  const Eigen::Index j_n = symbols.size() / v_p;
  Eigen::MatrixXd map(v_p, j_n);
  for (Eigen::Index j = 0; j < j_n; ++j)
    for (Eigen::Index o = 0; o < v_p; ++o) map(o, j) = symbols[j * v_p + o];
  return map;
}

}  // namespace detail

SymbolSeq cnn_forward(const SampleSeq& samples, const CnnModel& model,
                      CnnMode mode) {
  model.validate();
  const CnnConfig& cfg = model.config;
  const Eigen::Index group = Eigen::Index(cfg.parallel_symbols) * cfg.n_os;
  if (samples.size() == 0 || samples.size() % group != 0)
    throw UsageError("cnn_forward: input length must be a positive multiple of V_p*N_os");

  Eigen::MatrixXd x = samples.values.matrix().transpose();  // 1 x W
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& layer = model.layers[l];
    const LayerGeometry geom = layer_geometry(cfg, l, x.cols());
    Eigen::MatrixXd z =
        detail::conv1d(x, layer.weight, layer.bias, cfg.stride(l), cfg.pad(), geom);
    if (layer.has_bn()) {
      if (mode == CnnMode::train) {
        for (Eigen::Index c = 0; c < z.rows(); ++c) {
          const double mean = z.row(c).mean();
          const double var = (z.row(c).array() - mean).square().mean();
          z.row(c) = (layer.gamma[c] / std::sqrt(var + kBatchNormEps)) *
                         (z.row(c).array() - mean) +
                     layer.beta[c];
        }
      } else {
        for (Eigen::Index c = 0; c < z.rows(); ++c) {
          const double scale =
              layer.gamma[c] / std::sqrt(layer.running_var[c] + kBatchNormEps);
          const double shift = layer.beta[c] - scale * layer.running_mean[c];
          z.row(c) = scale * z.row(c).array() + shift;
        }
      }
      z = z.cwiseMax(0.0);  // ReLU
    }
    x = std::move(z);
  }
  return make_pam2(detail::flatten_interleaved(x));
}

double mac_per_symbol(const CnnConfig& c) {
  const double k = c.kernel, ch = c.channels, vp = c.parallel_symbols;
  return k * ch / vp + (c.layers - 2) * k * ch * ch / vp + k * ch / c.n_os;
}

long mac_per_symbol_fir(int taps) { return taps; }

VolterraMacCount mac_per_symbol_volterra(int m1, int m2, int m3) {
  const long kernel = long(m1) + long(m2) * m2 + long(m3) * m3 * m3;
  return VolterraMacCount{kernel, kernel + m2 + 2L * m3};
}

long cnn_receptive_field(const CnnConfig& c) {
  long rf = 1;
  long stride_product = 1;
  for (int l = 0; l < c.layers; ++l) {
    rf += long(c.kernel - 1) * stride_product;
    stride_product *= c.stride(l);
  }
  return rf;
}

}  // namespace eq
