#pragma once

// Independent dense QP solver for the SVM dual, used as a test oracle
// against the SMO implementation. Accelerated projected gradient with an
// exact projection onto {0 <= alpha_i <= C_i, sum y_i alpha_i = 0}; nothing
// here shares code with the solver under test.

#include <cmath>
#include <span>
#include <vector>

#include "av/svm.hpp"

namespace qp_oracle {

struct Result {
  std::vector<double> alpha;
  double bias = 0.0;
  double objective = 0.0;
  double kkt = 0.0;  // worst violation; oracle quality gate
};

inline std::vector<double> project(std::span<const double> v, std::span<const int> y,
                                   std::span<const double> C) {
  // Bisection on the multiplier of the equality constraint.
  const size_t n = v.size();
  auto value = [&](double lam) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double a = v[i] - lam * y[i];
      a = std::min(std::max(a, 0.0), C[i]);
      s += y[i] * a;
    }
    return s;
  };
  double lo = -1.0, hi = 1.0;
  for (int grow = 0; grow < 80 && value(lo) < 0.0; ++grow) lo *= 2.0;
  for (int grow = 0; grow < 80 && value(hi) > 0.0; ++grow) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (value(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  double lam = 0.5 * (lo + hi);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = std::min(std::max(v[i] - lam * y[i], 0.0), C[i]);
  return out;
}

inline Result solve(const av::clf::SvmProblem& prob, const av::clf::KernelSpec& kernel,
                    double C, bool class_weight, int iters = 20000) {
  const int n = static_cast<int>(prob.y.size());
  auto row = [&](int i) {
    return std::span<const double>(prob.x.v.data() + i * prob.x.cols,
                                   static_cast<size_t>(prob.x.cols));
  };
  std::vector<std::vector<double>> Q(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      Q[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          prob.y[static_cast<size_t>(i)] * prob.y[static_cast<size_t>(j)] *
          av::clf::kernel_eval(row(i), row(j), kernel);

  std::vector<double> Ci(static_cast<size_t>(n), C);
  if (class_weight) {
    int n_pos = 0, n_neg = 0;
    for (int y : prob.y) (y > 0 ? n_pos : n_neg)++;
    for (int i = 0; i < n; ++i)
      Ci[static_cast<size_t>(i)] =
          C * (prob.y[static_cast<size_t>(i)] > 0 ? static_cast<double>(n) / (2.0 * n_pos)
                                                  : static_cast<double>(n) / (2.0 * n_neg));
  }

  // Lipschitz bound via power iteration on Q.
  std::vector<double> pv(static_cast<size_t>(n), 1.0);
  double lip = 1.0;
  for (int it = 0; it < 100; ++it) {
    std::vector<double> nv(static_cast<size_t>(n), 0.0);
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j)
        nv[static_cast<size_t>(i)] += Q[static_cast<size_t>(i)][static_cast<size_t>(j)] * pv[static_cast<size_t>(j)];
      norm += nv[static_cast<size_t>(i)] * nv[static_cast<size_t>(i)];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) break;
    for (auto& x : nv) x /= norm;
    pv = nv;
    lip = norm;
  }
  lip = lip * 1.05 + 1e-6;

  auto objective = [&](const std::vector<double>& a) {
    double obj = 0.0;
    for (int i = 0; i < n; ++i) obj += a[static_cast<size_t>(i)];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        obj -= 0.5 * a[static_cast<size_t>(i)] * a[static_cast<size_t>(j)] *
               Q[static_cast<size_t>(i)][static_cast<size_t>(j)];
    return obj;
  };

  // FISTA with restart on objective decrease (maximization form).
  std::vector<double> x(static_cast<size_t>(n), 0.0), z = x;
  double t = 1.0;
  double best_obj = objective(x);
  std::vector<double> best = x;
  for (int it = 0; it < iters; ++it) {
    std::vector<double> step(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      double g = -1.0;  // gradient of the minimization form ½aQa - 1'a
      for (int j = 0; j < n; ++j)
        g += Q[static_cast<size_t>(i)][static_cast<size_t>(j)] * z[static_cast<size_t>(j)];
      step[static_cast<size_t>(i)] = z[static_cast<size_t>(i)] - g / lip;
    }
    std::vector<double> x_new = project(step, prob.y, Ci);
    double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double obj_new = objective(x_new);
    if (obj_new < best_obj - 1e-12) {  // lost ground: restart momentum
      z = best;
      x = best;
      t = 1.0;
      continue;
    }
    for (int i = 0; i < n; ++i)
      z[static_cast<size_t>(i)] = x_new[static_cast<size_t>(i)] +
                                  ((t - 1.0) / t_new) * (x_new[static_cast<size_t>(i)] - x[static_cast<size_t>(i)]);
    x = x_new;
    t = t_new;
    if (obj_new > best_obj) {
      best_obj = obj_new;
      best = x_new;
    }
  }

  Result res;
  res.alpha = best;
  res.objective = best_obj;

  // Bias from the optimality conditions.
  std::vector<double> g(static_cast<size_t>(n), 0.0);  // decision minus bias
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      g[static_cast<size_t>(i)] += best[static_cast<size_t>(j)] * prob.y[static_cast<size_t>(j)] *
                                   av::clf::kernel_eval(row(i), row(j), kernel);
  double lb = -1e300, ub = 1e300;
  double interior_sum = 0.0;
  int interior_n = 0;
  for (int i = 0; i < n; ++i) {
    double a = best[static_cast<size_t>(i)];
    double band = 1e-6 * std::max(1.0, Ci[static_cast<size_t>(i)]);
    int y = prob.y[static_cast<size_t>(i)];
    double b_at = y - g[static_cast<size_t>(i)];  // bias making this point a margin SV
    if (a > band && a < Ci[static_cast<size_t>(i)] - band) {
      interior_sum += b_at;
      ++interior_n;
    } else if (a <= band) {
      if (y > 0) lb = std::max(lb, b_at);
      else ub = std::min(ub, b_at);
    } else {
      if (y > 0) ub = std::min(ub, b_at);
      else lb = std::max(lb, b_at);
    }
  }
  if (interior_n > 0) res.bias = interior_sum / interior_n;
  else if (lb <= ub && lb > -1e300 && ub < 1e300) res.bias = 0.5 * (lb + ub);
  else if (lb > -1e300) res.bias = lb;
  else res.bias = ub;

  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    double margin = prob.y[static_cast<size_t>(i)] * (g[static_cast<size_t>(i)] + res.bias);
    double a = best[static_cast<size_t>(i)];
    double band = 1e-6 * std::max(1.0, Ci[static_cast<size_t>(i)]);
    double v;
    if (a <= band) v = std::max(0.0, 1.0 - margin);
    else if (a >= Ci[static_cast<size_t>(i)] - band) v = std::max(0.0, margin - 1.0);
    else v = std::fabs(margin - 1.0);
    worst = std::max(worst, v);
  }
  res.kkt = worst;
  return res;
}

inline double decision(const av::clf::SvmProblem& prob, const av::clf::KernelSpec& kernel,
                       const Result& r, std::span<const double> x) {
  double s = r.bias;
  for (int64_t i = 0; i < prob.x.rows; ++i)
    s += r.alpha[static_cast<size_t>(i)] * prob.y[static_cast<size_t>(i)] *
         av::clf::kernel_eval(
             std::span<const double>(prob.x.v.data() + i * prob.x.cols,
                                     static_cast<size_t>(prob.x.cols)),
             x, kernel);
  return s;
}

}  // namespace qp_oracle
