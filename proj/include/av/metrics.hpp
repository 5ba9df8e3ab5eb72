#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace av::eval {

struct Confusion {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// 2TP/(2TP+FP+FN); defined as 1 when there is nothing to get wrong
// (no true positives, no false calls).
double f1(const Confusion& c);

// Balanced-accuracy-style score in [-1, 1] with degenerate single-class
// branches. Throws when all four counts are zero.
double k_metric(const Confusion& c);

// 100*(aug-base)/base from unrounded scores; empty when base == 0.
std::optional<double> delta_pct(double base, double aug);

// Paired McNemar test on 0/1 correctness sequences. Exact two-sided binomial
// when the discordant count is below 25, continuity-corrected chi-square
// otherwise.
double mcnemar(std::span<const int> base_correct, std::span<const int> aug_correct);
double mcnemar_from_bc(int64_t b, int64_t c);

// Chi-square(df=1) survival function, exposed for the corrected branch.
double chi2_sf1(double stat);

}  // namespace av::eval
