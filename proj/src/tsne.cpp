#include "av/tsne.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <vector>

#include "av/rng.hpp"

namespace av::eval {

namespace {

using nn::Mat;

Mat pairwise_sq_dists(const Mat& x) {
  Mat d(x.rows, x.rows, 0.0);
  for (int64_t i = 0; i < x.rows; ++i) {
    for (int64_t j = i + 1; j < x.rows; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < x.cols; ++k) {
        double diff = x.at(i, k) - x.at(j, k);
        s += diff * diff;
      }
      d.at(i, j) = s;
      d.at(j, i) = s;
    }
  }
  return d;
}

// Symmetrized affinities calibrated to the target perplexity.
Mat joint_affinities(const Mat& dists, double perplexity) {
  const int64_t n = dists.rows;
  const double target_entropy = std::log(perplexity);
  Mat p(n, n, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    std::vector<double> row(static_cast<size_t>(n), 0.0);
    for (int iter = 0; iter < 64; ++iter) {
      double sum = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        row[static_cast<size_t>(j)] = (j == i) ? 0.0 : std::exp(-beta * dists.at(i, j));
        sum += row[static_cast<size_t>(j)];
      }
      if (sum <= 0.0) {
        beta /= 2.0;
        beta_hi = beta * 2.0;
        continue;
      }
      double entropy = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        double pj = row[static_cast<size_t>(j)] / sum;
        if (pj > 1e-300) entropy -= pj * std::log(pj);
      }
      double diff = entropy - target_entropy;
      if (std::fabs(diff) < 1e-7) break;
      if (diff > 0) {  // too flat: sharpen
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
      } else {
        beta_hi = beta;
        beta = 0.5 * (beta + beta_lo);
      }
      for (int64_t j = 0; j < n; ++j)
        row[static_cast<size_t>(j)] = (j == i) ? 0.0 : std::exp(-beta * dists.at(i, j));
    }
    double sum = 0.0;
    for (double v : row) sum += v;
    if (sum <= 0.0) sum = 1.0;
    for (int64_t j = 0; j < n; ++j) p.at(i, j) = row[static_cast<size_t>(j)] / sum;
  }
  // Symmetrize and floor.
  Mat joint(n, n, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      joint.at(i, j) = std::max((p.at(i, j) + p.at(j, i)) / (2.0 * static_cast<double>(n)), 1e-12);
  return joint;
}

struct QDist {
  Mat w;       // (1 + d²)^-1
  double sum;  // normalizer over i != j
};

QDist low_dim_weights(const Mat& y) {
  QDist q{Mat(y.rows, y.rows, 0.0), 0.0};
  for (int64_t i = 0; i < y.rows; ++i) {
    for (int64_t j = i + 1; j < y.rows; ++j) {
      double dx = y.at(i, 0) - y.at(j, 0);
      double dy = y.at(i, 1) - y.at(j, 1);
      double w = 1.0 / (1.0 + dx * dx + dy * dy);
      q.w.at(i, j) = w;
      q.w.at(j, i) = w;
      q.sum += 2.0 * w;
    }
  }
  return q;
}

double kl_divergence(const Mat& p, const Mat& y) {
  QDist q = low_dim_weights(y);
  double kl = 0.0;
  for (int64_t i = 0; i < p.rows; ++i) {
    for (int64_t j = 0; j < p.rows; ++j) {
      if (i == j) continue;
      double qij = std::max(q.w.at(i, j) / q.sum, 1e-12);
      kl += p.at(i, j) * std::log(p.at(i, j) / qij);
    }
  }
  return kl;
}

}  // namespace

TsneResult tsne(const Mat& points, const TsneConfig& cfg) {
  const int64_t n = points.rows;
  if (n < 4) throw std::invalid_argument("tsne: need at least 4 points");
  if (static_cast<double>(n) < cfg.perplexity * 3.0)
    std::cerr << "tsne: N=" << n << " is small for perplexity " << cfg.perplexity
              << " (3*perplexity recommended)\n";

  Mat p = joint_affinities(pairwise_sq_dists(points), cfg.perplexity);

  Rng rng(derive_seed(cfg.seed, "tsne-init"));
  Mat y(n, 2);
  for (auto& v : y.v) v = 1e-4 * rng.normal();

  TsneResult res;
  res.kl_initial = kl_divergence(p, y);

  Mat vel(n, 2, 0.0);
  Mat gains(n, 2, 1.0);
  for (int iter = 0; iter < cfg.iters; ++iter) {
    double exag = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    double momentum = iter < cfg.momentum_switch ? cfg.momentum_initial : cfg.momentum_final;
    QDist q = low_dim_weights(y);
    Mat grad(n, 2, 0.0);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double qij = q.w.at(i, j) / q.sum;
        double coef = 4.0 * (exag * p.at(i, j) - qij) * q.w.at(i, j);
        grad.at(i, 0) += coef * (y.at(i, 0) - y.at(j, 0));
        grad.at(i, 1) += coef * (y.at(i, 1) - y.at(j, 1));
      }
    }
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t k = 0; k < 2; ++k) {
        bool same_sign = (grad.at(i, k) > 0) == (vel.at(i, k) > 0);
        gains.at(i, k) = same_sign ? std::max(gains.at(i, k) * 0.8, 0.01)
                                   : gains.at(i, k) + 0.2;
        vel.at(i, k) = momentum * vel.at(i, k) - cfg.learning_rate * gains.at(i, k) * grad.at(i, k);
        y.at(i, k) += vel.at(i, k);
      }
    }
    // Re-center to remove the translational degree of freedom.
    double mean0 = 0.0, mean1 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      mean0 += y.at(i, 0);
      mean1 += y.at(i, 1);
    }
    mean0 /= static_cast<double>(n);
    mean1 /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      y.at(i, 0) -= mean0;
      y.at(i, 1) -= mean1;
    }
  }

  res.kl_final = kl_divergence(p, y);
  res.y = std::move(y);
  return res;
}

}  // namespace av::eval
