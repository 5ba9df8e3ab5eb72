#include "av/optim.hpp"

#include <cmath>

namespace av::nn {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.size()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.size()), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++step_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const auto& g = p.grad();
    std::vector<double> w(p.values());
    for (size_t j = 0; j < w.size(); ++j) {
      double grad = g[j];
      if (cfg_.weight_decay != 0.0 && !cfg_.decoupled) grad += cfg_.weight_decay * w[j];
      if (cfg_.weight_decay != 0.0 && cfg_.decoupled) w[j] *= 1.0 - cfg_.lr * cfg_.weight_decay;
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * grad;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * grad * grad;
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.set_values(w);
  }
}

}  // namespace av::nn
