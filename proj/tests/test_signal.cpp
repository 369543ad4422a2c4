#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <vector>

#include "eq/errors.hpp"
#include "eq/rng.hpp"
#include "eq/signal.hpp"

using namespace eq;

namespace {

// Exhaustive nearest-point search, written independently of decide().
double nearest_oracle(double x, const Eigen::ArrayXd& c) {
  std::vector<double> dist;
  for (Eigen::Index k = 0; k < c.size(); ++k) dist.push_back(std::abs(x - c[k]));
  const auto it = std::min_element(dist.begin(), dist.end());
  return c[it - dist.begin()];
}

}  // namespace

TEST_CASE("decide maps to the nearest constellation point") {
  Eigen::ArrayXd v(2);
  v << 0.3, -0.9;
  SymbolSeq out = decide(make_pam2(v));
  CHECK(out.values[0] == 1.0);
  CHECK(out.values[1] == -1.0);
}

TEST_CASE("decide breaks ties toward the lower index") {
  Eigen::ArrayXd v(1);
  v << 0.0;
  CHECK(decide(make_pam2(v)).values[0] == -1.0);
}

TEST_CASE("decide equals the exhaustive oracle on random input") {
  Rng rng(7);
  Eigen::ArrayXd c(4);
  c << -3.0, -1.0, 1.0, 3.0;  // PAM4-style grid exercises more tie geometry
  for (int trial = 0; trial < 200; ++trial) {
    SymbolSeq s;
    s.constellation = c;
    s.bits_per_symbol = 2;
    s.values = Eigen::ArrayXd(8);
    for (Eigen::Index i = 0; i < 8; ++i) s.values[i] = 8.0 * rng.uniform() - 4.0;
    SymbolSeq out = decide(s);
    for (Eigen::Index i = 0; i < 8; ++i)
      CHECK(out.values[i] == nearest_oracle(s.values[i], c));
  }
}

TEST_CASE("decide is idempotent") {
  Rng rng(13);
  SymbolSeq s = make_pam2(Eigen::ArrayXd(64));
  for (Eigen::Index i = 0; i < 64; ++i) s.values[i] = 4.0 * rng.uniform() - 2.0;
  SymbolSeq once = decide(s);
  SymbolSeq twice = decide(once);
  CHECK((once.values == twice.values).all());
}

TEST_CASE("decide is invariant under joint positive scaling") {
  Rng rng(17);
  SymbolSeq s = make_pam2(Eigen::ArrayXd(64));
  for (Eigen::Index i = 0; i < 64; ++i) s.values[i] = 4.0 * rng.uniform() - 2.0;
  SymbolSeq scaled = s;
  scaled.values *= 3.5;
  scaled.constellation *= 3.5;
  SymbolSeq a = decide(s);
  SymbolSeq b = decide(scaled);
  for (Eigen::Index i = 0; i < 64; ++i)
    CHECK(b.values[i] == doctest::Approx(3.5 * a.values[i]));
}

TEST_CASE("decide rejects an empty constellation") {
  SymbolSeq s;
  s.values = Eigen::ArrayXd::Zero(1);
  CHECK_THROWS_AS(decide(s), ConfigError);
}

TEST_CASE("ber on identical and flipped sequences") {
  Eigen::ArrayXd v(4);
  v << 1, -1, 1, 1;
  SymbolSeq a = make_pam2(v);
  SymbolSeq b = make_pam2(-v);
  CHECK(ber(a, a) == 0.0);
  CHECK(ber(a, b) == 1.0);
}

TEST_CASE("ber counts a single error in 1000 symbols") {
  Eigen::ArrayXd v = Eigen::ArrayXd::Ones(1000);
  SymbolSeq a = make_pam2(v);
  v[123] = -1.0;
  SymbolSeq b = make_pam2(v);
  CHECK(ber(a, b) == doctest::Approx(0.001));
}

TEST_CASE("ber is symmetric and honors skip regions") {
  Rng rng(23);
  Eigen::ArrayXd va(100), vb(100);
  for (Eigen::Index i = 0; i < 100; ++i) {
    va[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    vb[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  SymbolSeq a = make_pam2(va), b = make_pam2(vb);
  CHECK(ber(a, b, 5, 7) == ber(b, a, 5, 7));
  // Force the only disagreement into the skipped head.
  Eigen::ArrayXd vc = va;
  vc[0] = -va[0];
  CHECK(ber(a, make_pam2(vc), 1, 0) == 0.0);
}

TEST_CASE("ber rejects mismatched lengths") {
  SymbolSeq a = make_pam2(Eigen::ArrayXd::Ones(5));
  SymbolSeq b = make_pam2(Eigen::ArrayXd::Ones(6));
  CHECK_THROWS_AS(ber(a, b), UsageError);
}

TEST_CASE("rng streams are deterministic and independent per id") {
  Rng a(42), b(42);
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng base(42);
  Rng s1 = base.stream(1), s2 = base.stream(2);
  CHECK(s1.next_u64() != s2.next_u64());
  // Gaussian draws stay in a sane range and have roughly unit variance.
  Rng g(7);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = g.gaussian();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
}
