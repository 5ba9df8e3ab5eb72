#pragma once

#include <span>
#include <string>
#include <vector>

#include "av/corpus.hpp"
#include "av/stylometry.hpp"
#include "av/tensor.hpp"

namespace av::clf {

enum class Kernel { linear, poly, rbf, sigmoid };

const char* kernel_name(Kernel k);
Kernel kernel_from_name(const std::string& name);

struct KernelSpec {
  Kernel kind = Kernel::linear;
  double gamma = 1.0;
  double coef0 = 0.0;
  int degree = 3;
};

double kernel_eval(std::span<const double> u, std::span<const double> v, const KernelSpec& spec);

// 1/(dim * var(X)), the usual "scale" heuristic; falls back to 1/dim.
double scale_gamma(const nn::Mat& x);

struct SvmProblem {
  nn::Mat x;           // one row per example
  std::vector<int> y;  // +1 / -1
};

struct SvmTrainOptions {
  double C = 1.0;
  KernelSpec kernel;
  bool class_weight = false;  // per-class C_i scaled by N/(2*N_class)
  double tol = 1e-3;          // KKT stopping tolerance
  int max_passes = 10000;
};

struct SmoResult {
  std::vector<double> alpha;
  double bias = 0.0;
  double dual_objective = 0.0;
  double max_kkt_violation = 0.0;
  int sweeps = 0;
};

// Sequential minimal optimization on the dual; iterates working-set sweeps
// until the largest KKT violation drops below tol.
SmoResult smo_solve(const SvmProblem& prob, const SvmTrainOptions& opt);

double dual_objective(const SvmProblem& prob, const KernelSpec& kernel,
                      std::span<const double> alpha);

struct TrainedSvm {
  KernelSpec kernel;
  double C = 1.0;
  bool class_weight = false;
  nn::Mat support_x;
  std::vector<double> alpha;    // dual coefficient per support vector
  std::vector<int> labels;      // +1/-1 per support vector
  double bias = 0.0;

  double decision(std::span<const double> x) const;
  bool predict(std::span<const double> x) const { return decision(x) > 0.0; }

  // Textual dump: one line per support vector with dual coefficient, label
  // and feature values.
  void save(const std::string& path) const;
  static TrainedSvm load(const std::string& path);
};

TrainedSvm svm_fit(const SvmProblem& prob, const SvmTrainOptions& opt);

struct SvmGrid {
  std::vector<double> Cs = {0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
  std::vector<Kernel> kernels = {Kernel::linear, Kernel::poly, Kernel::rbf, Kernel::sigmoid};
  std::vector<bool> class_weights = {false, true};
};

struct GridSearchResult {
  SvmTrainOptions best;
  double best_val_f1 = -1.0;
  TrainedSvm model;  // winner retrained on train ∪ validation
};

// Grid search scored by validation F1. Ties resolve to the earlier grid
// entry; the grid iterates C ascending, kernels in declaration order and
// unweighted before weighted, which pins the tie-break.
GridSearchResult svm_train(const SvmProblem& train, const SvmProblem& validation,
                           const SvmGrid& grid = {});

// ---- feature assembly: base features + scaled χ²-selected char n-grams ----

struct SvmFeaturizer {
  style::BaseFeatureSpec base;
  style::NgramVocab ngrams;
  std::vector<int> selected;             // ascending n-gram indices
  std::vector<double> selected_max;      // training max per kept n-gram
  // Fit on training chunks only; labels mark the positive class.
  static SvmFeaturizer fit(std::span<const corpus::Chunk> train_chunks,
                           std::span<const int> labels,
                           std::vector<std::string> stopwords, style::PosTagger tagger,
                           double keep_fraction = 0.10);
  std::vector<double> transform(const corpus::Chunk& chunk) const;
  int dim() const;
};

}  // namespace av::clf
