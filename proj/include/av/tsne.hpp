#pragma once

#include <cstdint>

#include "av/tensor.hpp"

namespace av::eval {

struct TsneConfig {
  double perplexity = 30.0;
  int iters = 1000;
  uint64_t seed = 0;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  int momentum_switch = 250;
};

struct TsneResult {
  nn::Mat y;  // N×2
  double kl_initial = 0.0;
  double kl_final = 0.0;
};

// Exact t-SNE: full pairwise affinities with per-point bandwidth calibrated
// to the target perplexity by binary search, then momentum gradient descent
// on the KL divergence. Deterministic under the seed.
TsneResult tsne(const nn::Mat& points, const TsneConfig& cfg = {});

}  // namespace av::eval
