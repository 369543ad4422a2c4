#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "eq/channels.hpp"
#include "eq/equalizers.hpp"
#include "eq/signal.hpp"
#include "eq/training.hpp"

namespace eq {

/// Per-tensor fixed-point format. Widths are real-valued while they are
/// being learned and nonnegative integers once frozen. Signed formats
/// represent [-2^int_bits, 2^int_bits - 2^-frac_bits].
struct FixedFormat {
  bool is_signed = true;
  double int_bits = 16.0;
  double frac_bits = 16.0;

  double total_bits() const { return int_bits + frac_bits + (is_signed ? 1.0 : 0.0); }
  bool integral() const;
};

/// Round-to-nearest-even onto the 2^-frac_bits grid, then saturate.
/// Requires integer widths.
double quantize_value(double x, const FixedFormat& fmt);
Eigen::ArrayXd quantize_array(const Eigen::ArrayXd& x, const FixedFormat& fmt);

/// Bilinear interpolation between the four neighboring integer-width
/// quantizations; reduces to quantize_value at integer widths.
double fake_quantize(double x, const FixedFormat& fmt);

/// Gradient of fake_quantize w.r.t. the two widths (the gradient w.r.t. x
/// passes straight through).
struct WidthGrad {
  double d_int = 0.0;
  double d_frac = 0.0;
};
WidthGrad fake_quantize_width_grad(double x, const FixedFormat& fmt);

struct LayerFormats {
  FixedFormat weights;      // signed
  FixedFormat activations;  // unsigned on hidden (post-ReLU) layers
};

/// Mean total width over the L weight tensors / L activation tensors.
double mean_param_bits(const std::vector<LayerFormats>& formats);
double mean_activation_bits(const std::vector<LayerFormats>& formats);

/// MSE plus the width penalty QLF * (B_p + B_a) / 2.
double qat_loss(const SymbolSeq& soft, const SymbolSeq& target, double qlf,
                const std::vector<LayerFormats>& formats);

struct QatConfig {
  double qlf = 0.0005;
  int phase1_end = 2000;   // full-precision training
  int phase2_end = 10000;  // joint weight + width training
  int total_iters = 15000; // fine-tuning at frozen widths
  double width_lr_scale = 10.0;
  double init_int_bits = 16.0;
  double init_frac_bits = 16.0;
  TrainConfig base;

  void validate() const;
};

/// Frozen quantized model: batch norm folded into the convolutions, every
/// parameter stored at its grid value.
struct QuantizedCnn {
  CnnModel model;  // bn fields empty, bias carries the folded shift
  std::vector<LayerFormats> formats;
  std::vector<FixedFormat> bias_formats;  // weight frac, int widened to fit
};

SymbolSeq quantized_cnn_forward(const SampleSeq& samples, const QuantizedCnn& q);

/// Canonical quantized inference of an unfolded model: fold the running
/// batch-norm statistics, fake-quantize the folded parameters at the given
/// (possibly fractional) widths, quantize every layer output.
SymbolSeq quant_infer_forward(const SampleSeq& samples, const CnnModel& model,
                              const std::vector<LayerFormats>& formats);

/// Ceil the widths, fold batch norm, store parameters on their grids.
QuantizedCnn freeze(const CnnModel& model, std::vector<LayerFormats> formats);

struct QatTraceRow {
  int iteration = 0;
  int phase = 1;
  std::vector<double> weight_int, weight_frac, act_int, act_frac;  // per layer
  double b_p = 0.0, b_a = 0.0;
  double loss = 0.0;
  double ber = 1.0;
};

struct QatResult {
  CnnModel model;                      // trained, full-precision storage
  std::vector<LayerFormats> learned;   // real-valued widths after phase 2
  std::vector<LayerFormats> frozen_formats;
  QuantizedCnn frozen;
  std::vector<QatTraceRow> trace;
  double final_ber = 1.0;       // frozen model, large evaluation set
  bool width_clamped = false;   // some width collapsed and was clamped
  bool diverged = false;
  std::uint64_t seed = 0;
};

/// Three-phase quantization-aware training of the CNN equalizer.
QatResult qat_train(const CnnConfig& config, const ChannelConfig& channel,
                    const QatConfig& cfg, std::uint64_t seed);

}  // namespace eq
