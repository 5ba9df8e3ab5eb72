#include "av/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace av::eval {

double f1(const Confusion& c) {
  if (c.tp + c.fp + c.fn == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

double k_metric(const Confusion& c) {
  int64_t pos = c.tp + c.fn;
  int64_t neg = c.tn + c.fp;
  if (pos == 0 && neg == 0) throw std::invalid_argument("k_metric: empty confusion matrix");
  if (pos == 0) return 2.0 * static_cast<double>(c.tn) / static_cast<double>(neg) - 1.0;
  if (neg == 0) return 2.0 * static_cast<double>(c.tp) / static_cast<double>(pos) - 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(pos) +
         static_cast<double>(c.tn) / static_cast<double>(neg) - 1.0;
}

std::optional<double> delta_pct(double base, double aug) {
  if (base == 0.0) return std::nullopt;
  return 100.0 * (aug - base) / base;
}

double chi2_sf1(double stat) {
  // P(X > stat) for chi-square with one degree of freedom.
  return std::erfc(std::sqrt(stat / 2.0));
}

double mcnemar_from_bc(int64_t b, int64_t c) {
  int64_t n = b + c;
  if (n == 0) return 1.0;
  if (n < 25) {
    // Exact two-sided binomial: 2 * P(X <= min(b, c)) at p = 1/2, capped at 1.
    int64_t m = std::min(b, c);
    // log C(n, i) accumulated incrementally for numerical robustness.
    double tail = 0.0;
    double log_coef = 0.0;  // log C(n, 0)
    double log_half_n = -static_cast<double>(n) * std::log(2.0);
    for (int64_t i = 0; i <= m; ++i) {
      if (i > 0)
        log_coef += std::log(static_cast<double>(n - i + 1)) - std::log(static_cast<double>(i));
      tail += std::exp(log_coef + log_half_n);
    }
    return std::min(1.0, 2.0 * tail);
  }
  double stat = (std::fabs(static_cast<double>(b - c)) - 1.0);
  stat = stat * stat / static_cast<double>(n);
  return chi2_sf1(stat);
}

double mcnemar(std::span<const int> base_correct, std::span<const int> aug_correct) {
  if (base_correct.size() != aug_correct.size())
    throw std::invalid_argument("mcnemar: outcome sequences differ in length");
  int64_t b = 0, c = 0;
  for (size_t i = 0; i < base_correct.size(); ++i) {
    if (base_correct[i] == 1 && aug_correct[i] == 0) ++b;
    if (base_correct[i] == 0 && aug_correct[i] == 1) ++c;
  }
  return mcnemar_from_bc(b, c);
}

}  // namespace av::eval
