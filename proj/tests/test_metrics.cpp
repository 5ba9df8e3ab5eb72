#include <cmath>
#include <stdexcept>
#include <vector>

#include "av/metrics.hpp"
#include "av/rng.hpp"
#include "doctest.h"

using namespace av::eval;

TEST_CASE("f1 handles the all-negative edge case as a perfect score") {
  CHECK(f1({0, 0, 0, 10}) == 1.0);
  CHECK(f1({5, 0, 0, 0}) == 1.0);
  CHECK(f1({1, 1, 1, 0}) == doctest::Approx(0.5));
}

TEST_CASE("k metric covers all three branches") {
  CHECK(k_metric({0, 0, 0, 10}) == doctest::Approx(1.0));
  CHECK(k_metric({3, 4, 1, 4}) == doctest::Approx(0.25));
  CHECK(k_metric({1, 0, 1, 0}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(k_metric({0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("f1 and k are invariant to scaling the confusion counts") {
  av::Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Confusion c{rng.uniform_int(6), rng.uniform_int(6), rng.uniform_int(6), rng.uniform_int(6)};
    if (c.tp + c.fp + c.fn + c.tn == 0) continue;
    int64_t m = 1 + rng.uniform_int(9);
    Confusion scaled{c.tp * m, c.fp * m, c.fn * m, c.tn * m};
    CHECK(f1(c) == doctest::Approx(f1(scaled)).epsilon(1e-12));
    CHECK(k_metric(c) == doctest::Approx(k_metric(scaled)).epsilon(1e-12));
  }
}

TEST_CASE("relative improvement uses unrounded scores") {
  CHECK(*delta_pct(0.5, 0.55) == doctest::Approx(10.0));
  CHECK(*delta_pct(0.4, 0.4) == doctest::Approx(0.0));
  CHECK(!delta_pct(0.0, 0.3).has_value());
  // rounding the inputs would give a different delta; full precision does not
  double full = *delta_pct(0.45513, 0.42749);
  double rounded = *delta_pct(0.455, 0.427);
  CHECK(std::fabs(full - rounded) > 0.01);
}

TEST_CASE("mcnemar matches its analytic spot values") {
  CHECK(mcnemar_from_bc(0, 0) == doctest::Approx(1.0));
  CHECK(mcnemar_from_bc(10, 0) == doctest::Approx(2.0 * std::pow(0.5, 10)).epsilon(1e-9));
  CHECK(mcnemar_from_bc(5, 5) == doctest::Approx(1.0));
}

TEST_CASE("mcnemar is symmetric and depends only on the discordant counts") {
  av::Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    int64_t b = rng.uniform_int(30), c = rng.uniform_int(30);
    CHECK(mcnemar_from_bc(b, c) == doctest::Approx(mcnemar_from_bc(c, b)).epsilon(1e-12));
  }
  // permuting concordant pairs does not change p
  std::vector<int> base = {1, 1, 0, 0, 1, 0, 1, 1, 0, 1};
  std::vector<int> aug = {1, 0, 0, 1, 1, 0, 1, 0, 0, 1};
  double p1 = mcnemar(base, aug);
  std::vector<int> base2 = base, aug2 = aug;
  std::swap(base2[0], base2[4]);  // both (1,1) pairs
  std::swap(aug2[0], aug2[4]);
  CHECK(mcnemar(base2, aug2) == doctest::Approx(p1).epsilon(1e-12));
}

TEST_CASE("mcnemar rejects mismatched sequences") {
  std::vector<int> a = {1, 0};
  std::vector<int> b = {1};
  CHECK_THROWS_AS(mcnemar(a, b), std::invalid_argument);
}

TEST_CASE("exact branch matches a direct tail enumeration for small counts") {
  // direct oracle: sum binomial pmf terms from both tails
  auto oracle = [](int64_t b, int64_t c) {
    int64_t n = b + c;
    if (n == 0) return 1.0;
    int64_t m = std::min(b, c);
    long double p = 0.0L;
    for (int64_t i = 0; i <= m; ++i) {
      long double coef = 1.0L;
      for (int64_t k = 0; k < i; ++k)
        coef = coef * static_cast<long double>(n - k) / static_cast<long double>(k + 1);
      p += coef * std::pow(0.5L, static_cast<long double>(n));
    }
    double out = static_cast<double>(2.0L * p);
    return out > 1.0 ? 1.0 : out;
  };
  for (int64_t b = 0; b <= 24; ++b)
    for (int64_t c = 0; b + c <= 24; ++c)
      CHECK(mcnemar_from_bc(b, c) == doctest::Approx(oracle(b, c)).epsilon(1e-10));
}

TEST_CASE("large discordant counts switch to the corrected chi-square branch") {
  // b + c = 30: statistic (|b-c|-1)^2/(b+c) against chi-square df 1
  double p = mcnemar_from_bc(25, 5);
  double stat = (std::fabs(25.0 - 5.0) - 1.0) * (std::fabs(25.0 - 5.0) - 1.0) / 30.0;
  CHECK(p == doctest::Approx(chi2_sf1(stat)).epsilon(1e-12));
  CHECK(p < 0.001);
}
