#include <cmath>
#include <vector>

#include "av/rng.hpp"
#include "av/svm.hpp"
#include "doctest.h"
#include "qp_oracle.hpp"

using namespace av::clf;
using av::Rng;
using av::nn::Mat;

namespace {

SvmProblem make_problem(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
  SvmProblem p;
  p.x = Mat(static_cast<int64_t>(xs.size()), static_cast<int64_t>(xs[0].size()));
  for (size_t i = 0; i < xs.size(); ++i)
    std::copy(xs[i].begin(), xs[i].end(), p.x.v.begin() + static_cast<int64_t>(i) * p.x.cols);
  p.y = ys;
  return p;
}

std::span<const double> row(const Mat& m, int64_t i) {
  return {m.v.data() + i * m.cols, static_cast<size_t>(m.cols)};
}

// Linearly separable 2-D instance with a comfortable margin.
SvmProblem separable_instance(Rng& rng, int n) {
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (int i = 0; i < n; ++i) {
    bool pos = i % 2 == 0;
    double shift = pos ? 2.0 : -2.0;
    xs.push_back({shift + 0.8 * rng.normal(), shift + 0.8 * rng.normal()});
    ys.push_back(pos ? 1 : -1);
  }
  return make_problem(xs, ys);
}

}  // namespace

TEST_CASE("kernel evaluations match their formulas") {
  std::vector<double> u = {1.0, 2.0};
  std::vector<double> v = {3.0, 4.0};
  KernelSpec linear{Kernel::linear};
  CHECK(kernel_eval(u, v, linear) == doctest::Approx(11.0));

  KernelSpec rbf{Kernel::rbf, 0.7};
  CHECK(kernel_eval(u, u, rbf) == doctest::Approx(1.0));

  KernelSpec poly{Kernel::poly, 1.0, 0.0, 2};
  std::vector<double> a = {1.0, 1.0}, b = {2.0, 0.0};
  CHECK(kernel_eval(a, b, poly) == doctest::Approx(4.0));

  KernelSpec sig{Kernel::sigmoid, 0.5, 0.25};
  CHECK(kernel_eval(u, v, sig) == doctest::Approx(std::tanh(0.5 * 11.0 + 0.25)));

  std::vector<double> w = {1.0};
  CHECK_THROWS_AS(kernel_eval(u, w, linear), std::invalid_argument);
}

TEST_CASE("separable problem reaches full training accuracy and the oracle objective") {
  Rng rng(2024);
  SvmProblem prob = separable_instance(rng, 10);
  SvmTrainOptions opt;
  opt.C = 10.0;
  opt.kernel.kind = Kernel::linear;
  SmoResult res = smo_solve(prob, opt);
  TrainedSvm model = svm_fit(prob, opt);

  for (int64_t i = 0; i < prob.x.rows; ++i) {
    bool pred = model.predict(row(prob.x, i));
    CHECK(pred == (prob.y[static_cast<size_t>(i)] > 0));
  }
  auto oracle = qp_oracle::solve(prob, opt.kernel, opt.C, false);
  REQUIRE(oracle.kkt < 1e-5);
  CHECK(std::fabs(res.dual_objective - oracle.objective) < 1e-4);
  CHECK(res.max_kkt_violation < 1e-3);
}

TEST_CASE("grid search solves xor through the rbf kernel") {
  SvmProblem prob = make_problem({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {-1, 1, 1, -1});
  auto res = svm_train(prob, prob);
  for (int64_t i = 0; i < prob.x.rows; ++i)
    CHECK(res.model.predict(row(prob.x, i)) == (prob.y[static_cast<size_t>(i)] > 0));
  CHECK(res.best_val_f1 == doctest::Approx(1.0));
}

TEST_CASE("identical feature vectors with mixed labels do not crash") {
  SvmProblem prob = make_problem({{1, 1}, {1, 1}, {1, 1}, {1, 1}}, {1, -1, 1, -1});
  SvmTrainOptions opt;
  opt.C = 1.0;
  TrainedSvm model = svm_fit(prob, opt);
  // degenerate geometry: every point gets the same decision value
  double d0 = model.decision(row(prob.x, 0));
  for (int64_t i = 1; i < prob.x.rows; ++i)
    CHECK(model.decision(row(prob.x, i)) == doctest::Approx(d0));
}

TEST_CASE("margin support vectors sit at absolute decision one") {
  Rng rng(55);
  SvmProblem prob = separable_instance(rng, 10);
  SvmTrainOptions opt;
  opt.C = 10.0;
  opt.kernel.kind = Kernel::linear;
  SmoResult res = smo_solve(prob, opt);
  TrainedSvm model = svm_fit(prob, opt);
  int interior = 0;
  for (int64_t i = 0; i < prob.x.rows; ++i) {
    double a = res.alpha[static_cast<size_t>(i)];
    if (a > 1e-6 && a < opt.C - 1e-6) {
      ++interior;
      CHECK(std::fabs(std::fabs(model.decision(row(prob.x, i))) - 1.0) < 1e-3);
    }
  }
  CHECK(interior > 0);
}

TEST_CASE("symmetric two-point problem splits at the midpoint") {
  SvmProblem prob = make_problem({{-1.0}, {1.0}}, {-1, 1});
  SvmTrainOptions opt;
  opt.C = 10.0;
  opt.kernel.kind = Kernel::linear;
  TrainedSvm model = svm_fit(prob, opt);
  std::vector<double> mid = {0.0};
  CHECK(std::fabs(model.decision(mid)) < 1e-6);
  CHECK(model.decision(std::vector<double>{-1.0}) == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(model.decision(std::vector<double>{1.0}) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("random instances agree with the qp oracle on objective and labels") {
  Rng rng(404);
  int done = 0;
  while (done < 8) {
    int n = 6 + static_cast<int>(rng.uniform_int(5));
    int d = 2 + static_cast<int>(rng.uniform_int(2));
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (int i = 0; i < n; ++i) {
      std::vector<double> x;
      for (int j = 0; j < d; ++j) x.push_back(rng.normal());
      xs.push_back(std::move(x));
      ys.push_back(i % 2 == 0 ? 1 : -1);
    }
    SvmProblem prob = make_problem(xs, ys);
    SvmTrainOptions opt;
    opt.C = (done % 2 == 0) ? 1.0 : 10.0;
    opt.kernel.kind = (done % 2 == 0) ? Kernel::rbf : Kernel::linear;
    opt.kernel.gamma = 0.5;

    auto oracle = qp_oracle::solve(prob, opt.kernel, opt.C, false);
    if (oracle.kkt >= 1e-5) continue;  // oracle did not certify this draw
    SmoResult res = smo_solve(prob, opt);
    TrainedSvm model = svm_fit(prob, opt);
    CHECK(std::fabs(res.dual_objective - oracle.objective) < 1e-4);
    CHECK(res.max_kkt_violation < 1e-3);
    // equality constraint of the dual holds to high precision
    double ay = 0.0;
    for (size_t i = 0; i < res.alpha.size(); ++i) ay += res.alpha[i] * prob.y[i];
    CHECK(std::fabs(ay) < 1e-6);
    // box constraint with the configured C
    for (double a : res.alpha) {
      CHECK(a >= -1e-12);
      CHECK(a <= opt.C + 1e-12);
    }

    for (int t = 0; t < 20; ++t) {
      std::vector<double> probe;
      for (int j = 0; j < d; ++j) probe.push_back(2.0 * rng.normal());
      double od = qp_oracle::decision(prob, opt.kernel, oracle, probe);
      if (std::fabs(od) < 1e-5) continue;  // too close to the boundary to compare signs
      CHECK(model.predict(probe) == (od > 0));
    }
    ++done;
  }
}

TEST_CASE("duplicating a non-support point leaves decisions unchanged") {
  Rng rng(77);
  SvmProblem prob = separable_instance(rng, 10);
  SvmTrainOptions opt;
  opt.C = 5.0;
  opt.kernel.kind = Kernel::linear;
  SmoResult res = smo_solve(prob, opt);
  TrainedSvm before = svm_fit(prob, opt);

  int64_t loose = -1;
  for (int64_t i = 0; i < prob.x.rows; ++i)
    if (res.alpha[static_cast<size_t>(i)] < 1e-10) loose = i;
  REQUIRE(loose >= 0);

  SvmProblem dup = prob;
  dup.x = Mat(prob.x.rows + 1, prob.x.cols);
  std::copy(prob.x.v.begin(), prob.x.v.end(), dup.x.v.begin());
  auto r = row(prob.x, loose);
  std::copy(r.begin(), r.end(), dup.x.v.begin() + prob.x.rows * prob.x.cols);
  dup.y.push_back(prob.y[static_cast<size_t>(loose)]);
  TrainedSvm after = svm_fit(dup, opt);

  for (double gx = -3.0; gx <= 3.0; gx += 0.5)
    for (double gy = -3.0; gy <= 3.0; gy += 0.5) {
      std::vector<double> probe = {gx, gy};
      if (std::fabs(before.decision(probe)) < 1e-3) continue;
      CHECK(before.predict(probe) == after.predict(probe));
    }
}

TEST_CASE("single-class training is rejected") {
  SvmProblem prob = make_problem({{0.0}, {1.0}}, {1, 1});
  SvmTrainOptions opt;
  CHECK_THROWS_AS(smo_solve(prob, opt), std::invalid_argument);
}

TEST_CASE("support-vector dumps round-trip through save and load") {
  Rng rng(31);
  SvmProblem prob = separable_instance(rng, 8);
  SvmTrainOptions opt;
  opt.C = 2.0;
  opt.kernel.kind = Kernel::rbf;
  opt.kernel.gamma = 0.3;
  opt.class_weight = true;
  TrainedSvm model = svm_fit(prob, opt);
  model.save("svm_dump.txt");
  TrainedSvm loaded = TrainedSvm::load("svm_dump.txt");
  for (int t = 0; t < 10; ++t) {
    std::vector<double> probe = {rng.normal(), rng.normal()};
    CHECK(model.decision(probe) == doctest::Approx(loaded.decision(probe)).epsilon(1e-12));
  }
}

TEST_CASE("class weighting moves the boundary toward the minority class") {
  // 1 positive vs 5 negatives on a line; weighting shifts the cut point.
  SvmProblem prob = make_problem({{4.0}, {-1.0}, {-1.5}, {-2.0}, {-2.5}, {-3.0}},
                                 {1, -1, -1, -1, -1, -1});
  SvmTrainOptions plain;
  plain.C = 0.05;
  SvmTrainOptions weighted = plain;
  weighted.class_weight = true;
  TrainedSvm a = svm_fit(prob, plain);
  TrainedSvm b = svm_fit(prob, weighted);
  std::vector<double> probe = {1.2};
  CHECK(b.decision(probe) > a.decision(probe));
}
