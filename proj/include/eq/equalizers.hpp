#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "eq/rng.hpp"
#include "eq/signal.hpp"

namespace eq {

/// Linear feedforward equalizer: y_i is the weighted sum of M samples
/// centered on the symbol position, evaluated every n_os-th sample.
struct FirModel {
  Eigen::ArrayXd weights;  // M taps, M odd
  int n_os = 2;

  int taps() const { return int(weights.size()); }
  int half() const { return taps() / 2; }
};

SymbolSeq fir_forward(const SampleSeq& samples, const FirModel& model);

/// Order-3 Volterra equalizer with full (unrestricted) kernels.
struct VolterraModel {
  double w0 = 0.0;
  Eigen::ArrayXd w1;   // M1
  Eigen::MatrixXd w2;  // M2 x M2
  Eigen::ArrayXd w3;   // M3^3, flattened [m1][m2][m3]
  int m3 = 1;
  int n_os = 2;

  int m1() const { return int(w1.size()); }
  int m2() const { return int(w2.rows()); }
  double& w3_at(int a, int b, int c) { return w3[(Eigen::Index(a) * m3 + b) * m3 + c]; }
  double w3_at(int a, int b, int c) const { return w3[(Eigen::Index(a) * m3 + b) * m3 + c]; }
};

VolterraModel make_volterra(int m1, int m2, int m3, int n_os = 2);
SymbolSeq volterra_forward(const SampleSeq& samples, const VolterraModel& model);

/// Topology template of the strided 1-D CNN equalizer. Strides are fixed:
/// V_p for the first layer, 1 for middle layers, N_os for the last.
struct CnnConfig {
  int layers = 3;            // L >= 2
  int kernel = 9;            // K, odd, shared by all layers
  int channels = 5;          // C hidden channels
  int parallel_symbols = 8;  // V_p, output channels of the last layer
  int n_os = 2;
  int padding = -1;          // per-layer padding; -1 selects (K-1)/2
  bool bias = false;

  int pad() const { return padding < 0 ? (kernel - 1) / 2 : padding; }
  int stride(int layer) const {
    if (layer == 0) return parallel_symbols;
    if (layer == layers - 1) return n_os;
    return 1;
  }
  int in_channels(int layer) const { return layer == 0 ? 1 : channels; }
  int out_channels(int layer) const {
    return layer == layers - 1 ? parallel_symbols : channels;
  }
  void validate() const;
};

/// The configuration selected for hardware implementation.
CnnConfig selected_cnn_config();

struct CnnModel {
  struct Layer {
    // weight[o] is (in_channels x K); empty bias when disabled.
    std::vector<Eigen::MatrixXd> weight;
    Eigen::ArrayXd bias;
    // Batch norm (hidden layers only; empty on the last layer).
    Eigen::ArrayXd gamma, beta, running_mean, running_var;
    bool has_bn() const { return gamma.size() > 0; }
  };
  CnnConfig config;
  std::vector<Layer> layers;

  void validate() const;
};

inline constexpr double kBatchNormEps = 1e-5;

/// Fresh model with kaiming-uniform conv weights and identity batch norm.
CnnModel init_cnn(const CnnConfig& config, Rng& rng);

enum class CnnMode { train, infer };

/// Full forward pass. Train mode normalizes with batch statistics, infer
/// mode folds the running statistics into an exact affine scale+shift.
/// Input length must be divisible by V_p * N_os.
SymbolSeq cnn_forward(const SampleSeq& samples, const CnnModel& model,
                      CnnMode mode = CnnMode::infer);

/// Average multiply-accumulate operations per recovered symbol.
double mac_per_symbol(const CnnConfig& config);
long mac_per_symbol_fir(int taps);

struct VolterraMacCount {
  long kernel_macs;          // M1 + M2^2 + M3^3
  long with_power_products;  // + M2 squaring + 2*M3 cubing products
};
VolterraMacCount mac_per_symbol_volterra(int m1, int m2, int m3);

/// Receptive field of the CNN cascade, in input samples (odd).
long cnn_receptive_field(const CnnConfig& config);

// Per-layer output geometry shared by forward, training and the hardware
// model. Output j of a layer reads the input window starting at
// (j + crop_front) * stride - padding.
struct LayerGeometry {
  Eigen::Index width_nominal;  // cropped output width
  Eigen::Index crop_front;     // leading outputs dropped from the full map
};
LayerGeometry layer_geometry(const CnnConfig& config, int layer,
                             Eigen::Index in_width);

}  // namespace eq
