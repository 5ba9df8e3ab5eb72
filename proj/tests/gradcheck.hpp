#pragma once

// Central finite-difference gradient checking used across the test suites.
// The numeric side re-evaluates the forward function from scratch, so it is
// independent of the backward implementation it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "av/rng.hpp"
#include "av/tensor.hpp"

namespace gradcheck {

struct Result {
  double max_rel_err = 0.0;
  int checked = 0;
};

// forward: maps current leaf values to a scalar loss (rebuilds the graph).
// leaves: parameters/inputs to differentiate.
inline Result check(const std::function<av::nn::Tensor()>& forward,
                    std::vector<av::nn::Tensor>& leaves, av::Rng& rng,
                    int coords_per_leaf = 3, double h = 1e-4) {
  using av::nn::Tensor;
  Result res;

  Tensor loss = forward();
  for (auto& l : leaves) l.zero_grad();
  av::nn::backward(loss);

  for (auto& leaf : leaves) {
    std::vector<double> analytic = leaf.grad();
    std::vector<double> base = leaf.values();
    int n = static_cast<int>(base.size());
    for (int k = 0; k < coords_per_leaf; ++k) {
      int j = static_cast<int>(rng.uniform_int(n));
      std::vector<double> bumped = base;
      bumped[static_cast<size_t>(j)] = base[static_cast<size_t>(j)] + h;
      leaf.set_values(bumped);
      double up = forward().item();
      bumped[static_cast<size_t>(j)] = base[static_cast<size_t>(j)] - h;
      leaf.set_values(bumped);
      double down = forward().item();
      leaf.set_values(base);
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[static_cast<size_t>(j)];
      double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace gradcheck
