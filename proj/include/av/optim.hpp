#pragma once

#include <cstdint>
#include <vector>

#include "av/tensor.hpp"

namespace av::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // true = decoupled decay applied to the weights before the Adam delta
  // (AdamW); false = classic Adam with L2 added to the gradient.
  bool decoupled = false;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void step();
  void zero_grad();

  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace av::nn
