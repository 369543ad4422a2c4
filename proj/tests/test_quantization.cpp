#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eq/errors.hpp"
#include "eq/quantization.hpp"
#include "eq/rng.hpp"

using namespace eq;

namespace {

Eigen::ArrayXd random_array(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Eigen::ArrayXd a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = scale * (2.0 * rng.uniform() - 1.0);
  return a;
}

}  // namespace

TEST_CASE("quantize_value grid rounding and saturation") {
  FixedFormat f{true, 2, 2};
  CHECK(quantize_value(0.3, f) == 0.25);
  FixedFormat sat{true, 3, 4};
  CHECK(quantize_value(100.0, sat) == doctest::Approx(8.0 - 1.0 / 16));
  CHECK(quantize_value(-100.0, sat) == -8.0);
  FixedFormat uns{false, 2, 2};
  CHECK(quantize_value(-1.0, uns) == 0.0);
  // Round-half-to-even on the grid.
  FixedFormat f1{true, 4, 1};
  CHECK(quantize_value(0.25, f1) == 0.0);
  CHECK(quantize_value(0.75, f1) == 1.0);
}

TEST_CASE("quantize_value is idempotent and monotone") {
  FixedFormat f{true, 3, 5};
  Rng rng(2);
  Eigen::ArrayXd xs = random_array(500, rng, 12.0);
  std::sort(xs.data(), xs.data() + xs.size());
  double prev = -1e9;
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    const double q = quantize_value(xs[i], f);
    CHECK(quantize_value(q, f) == q);  // grid points are fixed points
    CHECK(q >= prev);
    prev = q;
  }
}

TEST_CASE("quantize_value rejects fractional widths") {
  FixedFormat f{true, 2.5, 2};
  CHECK_THROWS_AS(quantize_value(1.0, f), UsageError);
}

TEST_CASE("fake_quantize endpoints and midpoint") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double x = 20.0 * rng.uniform() - 10.0;
    FixedFormat f{true, 3, 4};
    CHECK(fake_quantize(x, f) == quantize_value(x, f));
    FixedFormat half{true, 3, 3.5};
    FixedFormat lo{true, 3, 3}, hi{true, 3, 4};
    CHECK(fake_quantize(x, half) ==
          doctest::Approx(0.5 * quantize_value(x, lo) + 0.5 * quantize_value(x, hi))
              .epsilon(1e-12));
  }
}

TEST_CASE("fake_quantize width gradient matches finite differences") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double x = 6.0 * rng.uniform() - 3.0;
    FixedFormat f{true, 2.3, 3.4};  // stays inside one interpolation cell
    const WidthGrad g = fake_quantize_width_grad(x, f);
    const double h = 1e-4;

    FixedFormat fp = f, fm = f;
    fp.frac_bits += h;
    fm.frac_bits -= h;
    const double fd_frac = (fake_quantize(x, fp) - fake_quantize(x, fm)) / (2 * h);
    FixedFormat ip = f, im = f;
    ip.int_bits += h;
    im.int_bits -= h;
    const double fd_int = (fake_quantize(x, ip) - fake_quantize(x, im)) / (2 * h);

    CHECK(std::abs(g.d_frac - fd_frac) <
          1e-3 * std::max(1.0, std::abs(fd_frac)));
    CHECK(std::abs(g.d_int - fd_int) < 1e-3 * std::max(1.0, std::abs(fd_int)));
  }
}

TEST_CASE("qat_loss arithmetic and monotonicity") {
  Eigen::ArrayXd v = Eigen::ArrayXd::Ones(8);
  SymbolSeq a = make_pam2(v);
  std::vector<LayerFormats> formats(3);
  for (auto& f : formats) {
    f.weights = FixedFormat{true, 16, 15};     // 32 total with sign
    f.activations = FixedFormat{false, 16, 16};  // 32 total unsigned
  }
  CHECK(qat_loss(a, a, 0.0, formats) == 0.0);
  CHECK(qat_loss(a, a, 0.05, formats) == doctest::Approx(0.05 * 32.0));
  formats[1].weights.frac_bits += 1.0;
  const double bumped = qat_loss(a, a, 0.05, formats);
  CHECK(bumped > 0.05 * 32.0);
}

TEST_CASE("freeze ceils widths") {
  Rng rng(7);
  CnnModel m = init_cnn(selected_cnn_config(), rng);
  std::vector<LayerFormats> formats(3);
  formats[0].weights = FixedFormat{true, 1.2, 9.2};
  formats[0].activations = FixedFormat{false, 2.0, 8.0};
  formats[1].weights = FixedFormat{true, 0.4, 11.9};
  formats[1].activations = FixedFormat{false, 2.6, 7.01};
  formats[2].weights = FixedFormat{true, 1.0, 8.0};
  formats[2].activations = FixedFormat{true, 2.2, 6.5};
  QuantizedCnn q = freeze(m, formats);
  CHECK(q.formats[0].weights.int_bits == 2.0);
  CHECK(q.formats[0].weights.frac_bits == 10.0);
  CHECK(q.formats[1].weights.int_bits == 1.0);
  CHECK(q.formats[1].weights.frac_bits == 12.0);
  CHECK(q.formats[2].weights.int_bits == 1.0);  // integer width stays
  CHECK(q.formats[2].weights.frac_bits == 8.0);
  CHECK(q.formats[2].activations.int_bits == 3.0);
}

TEST_CASE("frozen forward equals fake-quantized forward at integer widths") {
  Rng rng(11);
  CnnModel m = init_cnn(selected_cnn_config(), rng);
  // Give batch norm non-trivial statistics so folding is exercised.
  for (auto& layer : m.layers) {
    if (!layer.has_bn()) continue;
    for (Eigen::Index c = 0; c < layer.gamma.size(); ++c) {
      layer.gamma[c] = 0.5 + rng.uniform();
      layer.beta[c] = rng.uniform() - 0.5;
      layer.running_mean[c] = rng.uniform() - 0.5;
      layer.running_var[c] = 0.5 + rng.uniform();
    }
  }
  std::vector<LayerFormats> formats(3);
  for (int l = 0; l < 3; ++l) {
    formats[size_t(l)].weights = FixedFormat{true, 2, 11};
    formats[size_t(l)].activations = FixedFormat{l == 2, 3, 9};
  }
  QuantizedCnn q = freeze(m, formats);

  SampleSeq x{random_array(640, rng), 2};
  SymbolSeq frozen = quantized_cnn_forward(x, q);
  SymbolSeq faked = quant_infer_forward(x, m, formats);
  REQUIRE(frozen.size() == faked.size());
  for (Eigen::Index i = 0; i < frozen.size(); ++i)
    CHECK(frozen.values[i] == doctest::Approx(faked.values[i]).epsilon(1e-12));
}

TEST_CASE("frozen inference values sit on their activation grids") {
  Rng rng(13);
  CnnModel m = init_cnn(selected_cnn_config(), rng);
  std::vector<LayerFormats> formats(3);
  for (int l = 0; l < 3; ++l) {
    formats[size_t(l)].weights = FixedFormat{true, 2, 10};
    formats[size_t(l)].activations = FixedFormat{l == 2, 3, 7};
  }
  QuantizedCnn q = freeze(m, formats);
  // Re-quantization fixpoint on parameters.
  for (size_t l = 0; l < q.model.layers.size(); ++l) {
    for (const auto& w : q.model.layers[l].weight)
      for (Eigen::Index i = 0; i < w.size(); ++i)
        CHECK(quantize_value(w.data()[i], q.formats[l].weights) == w.data()[i]);
    for (Eigen::Index i = 0; i < q.model.layers[l].bias.size(); ++i)
      CHECK(quantize_value(q.model.layers[l].bias[i], q.bias_formats[l]) ==
            q.model.layers[l].bias[i]);
  }
  // Output symbols are representable in the last activation format.
  SampleSeq x{random_array(320, rng), 2};
  SymbolSeq y = quantized_cnn_forward(x, q);
  for (Eigen::Index i = 0; i < y.size(); ++i)
    CHECK(quantize_value(y.values[i], q.formats[2].activations) == y.values[i]);
}

TEST_CASE("qat config validates phase boundaries") {
  QatConfig bad;
  bad.phase1_end = 5000;
  bad.phase2_end = 4000;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
