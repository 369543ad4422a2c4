#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eq/channels.hpp"
#include "eq/checkpoint.hpp"
#include "eq/equalizers.hpp"
#include "eq/signal.hpp"

namespace eq {

struct TrainConfig {
  int iterations = 10000;
  double lr = 0.001;  // constant; the protocol names only an initial rate
  int batch_symbols = 2048;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int eval_every = 500;
  Eigen::Index eval_symbols = 50000;         // per-checkpoint BER trace
  Eigen::Index final_eval_symbols = 1000000;  // final BER measurement
  std::uint64_t eval_seed = 0xE7A1D5EEDULL;   // disjoint from training streams
};

double mse_loss(const SymbolSeq& soft, const SymbolSeq& target);

/// Standard Adam with bias correction, applied per parameter tensor.
struct AdamState {
  Eigen::ArrayXd m, v;
  long step = 0;
  void init(Eigen::Index n) {
    m = Eigen::ArrayXd::Zero(n);
    v = Eigen::ArrayXd::Zero(n);
    step = 0;
  }
};

struct AdamParams {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void adam_step(Eigen::Ref<Eigen::ArrayXd> params, const Eigen::ArrayXd& grads,
               AdamState& state, const AdamParams& hp);

/// One design point of the exploration: family plus hyperparameters.
struct EqualizerSpec {
  enum class Family { fir, volterra, cnn };
  Family family = Family::cnn;
  int fir_taps = 57;
  std::array<int, 3> volterra_taps = {9, 3, 3};
  CnnConfig cnn = selected_cnn_config();

  std::string id() const;
  double mac() const;  // kernel-MAC convention for Volterra
  int n_os() const;
};

struct TrainResult {
  EqualizerModel model;
  Eigen::ArrayXd loss_trace;  // one entry per iteration
  std::vector<std::pair<int, double>> ber_trace;
  std::vector<double> checkpoint_seconds;
  double final_ber = 1.0;
  bool diverged = false;
  std::uint64_t seed = 0;
};

/// Trains one model with fresh channel data drawn every iteration.
TrainResult train(const EqualizerSpec& spec, const ChannelConfig& channel,
                  const TrainConfig& cfg, std::uint64_t seed);

struct WorstOfN {
  std::vector<TrainResult> runs;
  double worst_ber = 1.0;   // max final BER over converged runs
  double median_ber = 1.0;  // median over converged runs
  int n_diverged = 0;
};

/// Repeat training per seed and report the highest achieved BER.
WorstOfN train_worst_of_n(const EqualizerSpec& spec, const ChannelConfig& channel,
                          const TrainConfig& cfg);

/// BER on a fresh dataset, skipping the model's receptive half-width of
/// symbols on each side.
double evaluate_ber(const EqualizerModel& model, const ChannelConfig& channel,
                    Eigen::Index n_symbols, std::uint64_t seed);
double evaluate_ber_on(const EqualizerModel& model, const Dataset& ds);
Eigen::Index ber_skip_symbols(const EqualizerModel& model);

SymbolSeq equalize(const EqualizerModel& model, const SampleSeq& samples);

/// MSE loss of one window and its gradient w.r.t. the taps. Exposed for the
/// finite-difference suites; train() runs the same code.
double fir_loss_and_grad(const FirModel& model, const SampleSeq& samples,
                         const Eigen::ArrayXd& target, Eigen::ArrayXd& grad_w);

struct VolterraGrads {
  double w0 = 0.0;
  Eigen::ArrayXd w1;
  Eigen::MatrixXd w2;
  Eigen::ArrayXd w3;
};
double volterra_loss_and_grad(const VolterraModel& model, const SampleSeq& samples,
                              const Eigen::ArrayXd& target, VolterraGrads& grads);

// ---------------------------------------------------------------------------
// CNN reverse-mode machinery, shared with quantization-aware training.

struct CnnGrads {
  std::vector<std::vector<Eigen::MatrixXd>> weight;
  std::vector<Eigen::ArrayXd> bias, gamma, beta;
  void init_like(const CnnModel& model);
  void zero();
};

/// Recorded primal values of one training-mode forward pass.
struct CnnTape {
  struct LayerTape {
    Eigen::MatrixXd x;        // conv input
    Eigen::MatrixXd z;        // conv output (pre batch norm)
    Eigen::ArrayXd mean, var; // batch statistics (biased)
    Eigen::MatrixXd zhat;     // normalized
    Eigen::MatrixXd act_pre;  // after BN+ReLU, before any hook transform
    Eigen::MatrixXd act;      // layer output fed to the next layer
    LayerGeometry geom;
  };
  std::vector<LayerTape> layers;
  Eigen::ArrayXd soft;  // flattened output symbols
};

/// Customization points used by quantization-aware training. Transform
/// methods may replace values in place; backward methods observe the
/// adjoints flowing through the transformed tensors (gradients pass
/// straight through to the raw values).
class CnnHooks {
 public:
  virtual ~CnnHooks() = default;
  virtual void transform_weights(int layer, std::vector<Eigen::MatrixXd>& w) {
    (void)layer, (void)w;
  }
  virtual void weights_backward(int layer,
                                const std::vector<Eigen::MatrixXd>& grad) {
    (void)layer, (void)grad;
  }
  virtual void transform_activation(int layer, Eigen::MatrixXd& a) {
    (void)layer, (void)a;
  }
  virtual void activation_backward(int layer, const Eigen::MatrixXd& grad) {
    (void)layer, (void)grad;
  }
};

/// Train-mode forward pass recording the tape; optionally updates the
/// model's running batch-norm statistics (momentum 0.1).
void cnn_train_forward(const SampleSeq& samples, CnnModel& model, CnnTape& tape,
                       bool update_running_stats, CnnHooks* hooks = nullptr);

/// Exact reverse-mode gradients of a loss whose adjoint on the soft output
/// symbols is grad_soft.
void cnn_backward(const CnnModel& model, const CnnTape& tape,
                  const Eigen::ArrayXd& grad_soft, CnnGrads& grads,
                  CnnHooks* hooks = nullptr);

/// Adam states for every trainable CNN tensor, updated in a fixed order.
struct CnnAdam {
  std::vector<std::vector<AdamState>> weight;
  std::vector<AdamState> bias, gamma, beta;
  void init_like(const CnnModel& model);
  void update(CnnModel& model, const CnnGrads& grads, const AdamParams& hp);
};

}  // namespace eq
