#include "av/svm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace av::clf {

const char* kernel_name(Kernel k) {
  switch (k) {
    case Kernel::linear: return "linear";
    case Kernel::poly: return "poly";
    case Kernel::rbf: return "rbf";
    case Kernel::sigmoid: return "sigmoid";
  }
  return "?";
}

Kernel kernel_from_name(const std::string& name) {
  if (name == "linear") return Kernel::linear;
  if (name == "poly") return Kernel::poly;
  if (name == "rbf") return Kernel::rbf;
  if (name == "sigmoid") return Kernel::sigmoid;
  throw std::invalid_argument("unknown kernel: " + name);
}

double kernel_eval(std::span<const double> u, std::span<const double> v, const KernelSpec& spec) {
  if (u.size() != v.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
  switch (spec.kind) {
    case Kernel::linear: {
      double dot = 0.0;
      for (size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
      return dot;
    }
    case Kernel::poly: {
      double dot = 0.0;
      for (size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
      return std::pow(spec.gamma * dot + spec.coef0, spec.degree);
    }
    case Kernel::rbf: {
      double d2 = 0.0;
      for (size_t i = 0; i < u.size(); ++i) {
        double d = u[i] - v[i];
        d2 += d * d;
      }
      return std::exp(-spec.gamma * d2);
    }
    case Kernel::sigmoid: {
      double dot = 0.0;
      for (size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
      return std::tanh(spec.gamma * dot + spec.coef0);
    }
  }
  throw std::logic_error("kernel_eval: unreachable");
}

double scale_gamma(const nn::Mat& x) {
  if (x.rows == 0 || x.cols == 0) return 1.0;
  double mean = 0.0;
  for (double v : x.v) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x.v) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  double denom = static_cast<double>(x.cols) * var;
  return denom > 1e-12 ? 1.0 / denom : 1.0 / static_cast<double>(x.cols);
}

namespace {

std::span<const double> row(const nn::Mat& m, int64_t i) {
  return {m.v.data() + i * m.cols, static_cast<size_t>(m.cols)};
}

struct SmoState {
  const SvmProblem& prob;
  const SvmTrainOptions& opt;
  int n;
  std::vector<double> Ci;      // per-example box
  std::vector<double> alpha;
  std::vector<double> fcache;  // f(x_i) without bias: sum_j alpha_j y_j K_ij
  std::vector<std::vector<double>> K;
  double bias = 0.0;

  SmoState(const SvmProblem& p, const SvmTrainOptions& o)
      : prob(p), opt(o), n(static_cast<int>(p.y.size())) {
    alpha.assign(static_cast<size_t>(n), 0.0);
    fcache.assign(static_cast<size_t>(n), 0.0);
    K.assign(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n), 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        double k = kernel_eval(row(p.x, i), row(p.x, j), o.kernel);
        K[static_cast<size_t>(i)][static_cast<size_t>(j)] = k;
        K[static_cast<size_t>(j)][static_cast<size_t>(i)] = k;
      }
    int n_pos = 0, n_neg = 0;
    for (int y : p.y) (y > 0 ? n_pos : n_neg)++;
    Ci.assign(static_cast<size_t>(n), o.C);
    if (o.class_weight && n_pos > 0 && n_neg > 0) {
      double w_pos = static_cast<double>(n) / (2.0 * n_pos);
      double w_neg = static_cast<double>(n) / (2.0 * n_neg);
      for (int i = 0; i < n; ++i)
        Ci[static_cast<size_t>(i)] = o.C * (p.y[static_cast<size_t>(i)] > 0 ? w_pos : w_neg);
    }
  }

  double decision(int i) const { return fcache[static_cast<size_t>(i)] + bias; }

  // One pair update (Platt's takeStep). Returns true when alpha moved.
  bool take_step(int i1, int i2) {
    if (i1 == i2) return false;
    double a1 = alpha[static_cast<size_t>(i1)], a2 = alpha[static_cast<size_t>(i2)];
    int y1 = prob.y[static_cast<size_t>(i1)], y2 = prob.y[static_cast<size_t>(i2)];
    double E1 = decision(i1) - y1, E2 = decision(i2) - y2;
    double s = y1 * y2;
    double C1 = Ci[static_cast<size_t>(i1)], C2 = Ci[static_cast<size_t>(i2)];
    double L, H;
    if (y1 != y2) {
      L = std::max(0.0, a2 - a1);
      H = std::min(C2, C1 + a2 - a1);
    } else {
      L = std::max(0.0, a1 + a2 - C1);
      H = std::min(C2, a1 + a2);
    }
    if (L >= H) return false;
    double k11 = K[static_cast<size_t>(i1)][static_cast<size_t>(i1)];
    double k12 = K[static_cast<size_t>(i1)][static_cast<size_t>(i2)];
    double k22 = K[static_cast<size_t>(i2)][static_cast<size_t>(i2)];
    double eta = k11 + k22 - 2.0 * k12;
    double a2_new;
    if (eta > 1e-12) {
      a2_new = std::clamp(a2 + y2 * (E1 - E2) / eta, L, H);
    } else {
      // Flat (or concave) direction: evaluate the dual objective change at
      // both clip ends and move to the better one.
      double v1 = fcache[static_cast<size_t>(i1)];
      double v2 = fcache[static_cast<size_t>(i2)];
      auto delta_obj = [&](double a2n) {
        double a1n = a1 + s * (a2 - a2n);
        double d1 = a1n - a1, d2 = a2n - a2;
        return d1 + d2 - d1 * y1 * v1 - d2 * y2 * v2 - 0.5 * d1 * d1 * k11 -
               0.5 * d2 * d2 * k22 - d1 * d2 * s * k12;
      };
      double dL = delta_obj(L), dH = delta_obj(H);
      if (std::max(dL, dH) <= 1e-12) return false;
      a2_new = dL > dH ? L : H;
    }
    if (std::fabs(a2_new - a2) < 1e-12 * (a2_new + a2 + 1e-12)) return false;
    double a1_new = a1 + s * (a2 - a2_new);

    double delta1 = y1 * (a1_new - a1);
    double delta2 = y2 * (a2_new - a2);
    double b1_new = bias - E1 - delta1 * k11 - delta2 * k12;
    double b2_new = bias - E2 - delta1 * k12 - delta2 * k22;
    if (a1_new > 1e-12 && a1_new < C1 - 1e-12) bias = b1_new;
    else if (a2_new > 1e-12 && a2_new < C2 - 1e-12) bias = b2_new;
    else bias = 0.5 * (b1_new + b2_new);

    for (int i = 0; i < n; ++i)
      fcache[static_cast<size_t>(i)] += delta1 * K[static_cast<size_t>(i1)][static_cast<size_t>(i)] +
                                        delta2 * K[static_cast<size_t>(i2)][static_cast<size_t>(i)];
    alpha[static_cast<size_t>(i1)] = a1_new;
    alpha[static_cast<size_t>(i2)] = a2_new;
    return true;
  }

  // Re-derive the threshold from the converged alphas: average over margin
  // SVs, else the midpoint of the feasible interval. Pair updates only
  // estimate it, which can leave a degenerate problem (no interior SVs)
  // with a feasible dual but a misplaced bias.
  void finalize_bias() {
    double interior_sum = 0.0;
    int interior_n = 0;
    double lb = -std::numeric_limits<double>::infinity();
    double ub = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      double a = alpha[static_cast<size_t>(i)];
      double C = Ci[static_cast<size_t>(i)];
      int y = prob.y[static_cast<size_t>(i)];
      double b_at = y - fcache[static_cast<size_t>(i)];
      if (a > 1e-9 && a < C - 1e-9) {
        interior_sum += b_at;
        ++interior_n;
      } else if (a <= 1e-9) {
        if (y > 0) lb = std::max(lb, b_at);
        else ub = std::min(ub, b_at);
      } else {
        if (y > 0) ub = std::min(ub, b_at);
        else lb = std::max(lb, b_at);
      }
    }
    if (interior_n > 0) bias = interior_sum / interior_n;
    else if (std::isfinite(lb) && std::isfinite(ub)) bias = 0.5 * (lb + ub);
    else if (std::isfinite(lb)) bias = lb;
    else if (std::isfinite(ub)) bias = ub;
  }

  double kkt_violation(int i) const {
    double yi = prob.y[static_cast<size_t>(i)];
    double margin = yi * decision(i);
    double a = alpha[static_cast<size_t>(i)];
    double C = Ci[static_cast<size_t>(i)];
    if (a < 1e-9) return std::max(0.0, 1.0 - margin);
    if (a > C - 1e-9) return std::max(0.0, margin - 1.0);
    return std::fabs(margin - 1.0);
  }

  int worst_violator() const {
    int worst = -1;
    double worst_v = 0.0;
    for (int i = 0; i < n; ++i) {
      double v = kkt_violation(i);
      if (v > worst_v) {
        worst_v = v;
        worst = i;
      }
    }
    return worst;
  }

  bool examine(int i2) {
    double v = kkt_violation(i2);
    if (v < opt.tol) return false;
    // Second-choice heuristic: maximize |E1 - E2|.
    double E2 = decision(i2) - prob.y[static_cast<size_t>(i2)];
    int best = -1;
    double best_gap = -1.0;
    for (int i = 0; i < n; ++i) {
      if (alpha[static_cast<size_t>(i)] > 1e-9 && alpha[static_cast<size_t>(i)] < Ci[static_cast<size_t>(i)] - 1e-9) {
        double gap = std::fabs(decision(i) - prob.y[static_cast<size_t>(i)] - E2);
        if (gap > best_gap) {
          best_gap = gap;
          best = i;
        }
      }
    }
    if (best >= 0 && take_step(best, i2)) return true;
    for (int off = 0; off < n; ++off) {
      int i1 = (i2 + 1 + off) % n;
      if (take_step(i1, i2)) return true;
    }
    return false;
  }
};

}  // namespace

double dual_objective(const SvmProblem& prob, const KernelSpec& kernel,
                      std::span<const double> alpha) {
  int n = static_cast<int>(prob.y.size());
  double obj = 0.0;
  for (int i = 0; i < n; ++i) obj += alpha[static_cast<size_t>(i)];
  for (int i = 0; i < n; ++i) {
    if (alpha[static_cast<size_t>(i)] == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      if (alpha[static_cast<size_t>(j)] == 0.0) continue;
      obj -= 0.5 * alpha[static_cast<size_t>(i)] * alpha[static_cast<size_t>(j)] *
             prob.y[static_cast<size_t>(i)] * prob.y[static_cast<size_t>(j)] *
             kernel_eval(row(prob.x, i), row(prob.x, j), kernel);
    }
  }
  return obj;
}

SmoResult smo_solve(const SvmProblem& prob, const SvmTrainOptions& opt) {
  if (prob.x.rows != static_cast<int64_t>(prob.y.size()))
    throw std::invalid_argument("smo_solve: one label per row required");
  bool has_pos = false, has_neg = false;
  for (int y : prob.y) {
    if (y > 0) has_pos = true;
    else has_neg = true;
  }
  if (!has_pos || !has_neg)
    throw std::invalid_argument("smo_solve: both classes must be present");

  SmoState st(prob, opt);
  int sweeps = 0;
  bool examine_all = true;
  while (sweeps < opt.max_passes) {
    ++sweeps;
    int changed = 0;
    for (int i = 0; i < st.n; ++i) {
      if (!examine_all) {
        double a = st.alpha[static_cast<size_t>(i)];
        if (a < 1e-9 || a > st.Ci[static_cast<size_t>(i)] - 1e-9) continue;
      }
      if (st.examine(i)) ++changed;
    }
    if (examine_all) {
      if (changed == 0) break;  // full sweep without progress: converged or stuck
      examine_all = false;
    } else if (changed == 0) {
      int worst = st.worst_violator();
      if (worst < 0 || st.kkt_violation(worst) < opt.tol) break;
      examine_all = true;
    }
  }

  st.finalize_bias();

  SmoResult res;
  res.alpha = st.alpha;
  res.bias = st.bias;
  res.sweeps = sweeps;
  res.dual_objective = dual_objective(prob, opt.kernel, st.alpha);
  double worst = 0.0;
  for (int i = 0; i < st.n; ++i) worst = std::max(worst, st.kkt_violation(i));
  res.max_kkt_violation = worst;
  return res;
}

double TrainedSvm::decision(std::span<const double> x) const {
  if (static_cast<int64_t>(x.size()) != support_x.cols)
    throw std::invalid_argument("svm decision: dimension mismatch");
  double sum = bias;
  for (int64_t i = 0; i < support_x.rows; ++i)
    sum += alpha[static_cast<size_t>(i)] * labels[static_cast<size_t>(i)] *
           kernel_eval(row(support_x, i), x, kernel);
  return sum;
}

TrainedSvm svm_fit(const SvmProblem& prob, const SvmTrainOptions& opt) {
  SmoResult res = smo_solve(prob, opt);
  TrainedSvm model;
  model.kernel = opt.kernel;
  model.C = opt.C;
  model.class_weight = opt.class_weight;
  model.bias = res.bias;
  int64_t dim = prob.x.cols;
  std::vector<int64_t> kept;
  for (int64_t i = 0; i < prob.x.rows; ++i)
    if (res.alpha[static_cast<size_t>(i)] > 1e-10) kept.push_back(i);
  model.support_x = nn::Mat(static_cast<int64_t>(kept.size()), dim);
  for (size_t k = 0; k < kept.size(); ++k) {
    auto r = row(prob.x, kept[k]);
    std::copy(r.begin(), r.end(), model.support_x.v.begin() + static_cast<int64_t>(k) * dim);
    model.alpha.push_back(res.alpha[static_cast<size_t>(kept[k])]);
    model.labels.push_back(prob.y[static_cast<size_t>(kept[k])]);
  }
  return model;
}

namespace {

double f1_of_predictions(const TrainedSvm& model, const SvmProblem& data) {
  int64_t tp = 0, fp = 0, fn = 0;
  for (int64_t i = 0; i < data.x.rows; ++i) {
    bool pred = model.decision(row(data.x, i)) > 0.0;
    bool truth = data.y[static_cast<size_t>(i)] > 0;
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && truth) ++fn;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace

GridSearchResult svm_train(const SvmProblem& train, const SvmProblem& validation,
                           const SvmGrid& grid) {
  GridSearchResult best;
  double default_gamma = scale_gamma(train.x);
  for (double C : grid.Cs) {
    for (Kernel k : grid.kernels) {
      for (bool cw : grid.class_weights) {
        SvmTrainOptions opt;
        opt.C = C;
        opt.kernel.kind = k;
        opt.kernel.gamma = default_gamma;
        opt.class_weight = cw;
        TrainedSvm model = svm_fit(train, opt);
        double f1 = f1_of_predictions(model, validation);
        if (f1 > best.best_val_f1) {  // strict: earlier grid entries win ties
          best.best_val_f1 = f1;
          best.best = opt;
        }
      }
    }
  }
  // Retrain the winner on train ∪ validation.
  SvmProblem merged;
  merged.x = nn::Mat(train.x.rows + validation.x.rows, train.x.cols);
  std::copy(train.x.v.begin(), train.x.v.end(), merged.x.v.begin());
  std::copy(validation.x.v.begin(), validation.x.v.end(),
            merged.x.v.begin() + train.x.size());
  merged.y = train.y;
  merged.y.insert(merged.y.end(), validation.y.begin(), validation.y.end());
  best.model = svm_fit(merged, best.best);
  return best;
}

void TrainedSvm::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("svm save: cannot write " + path);
  char buf[32];
  out << "av-svm v1\n";
  out << "kernel " << kernel_name(kernel.kind) << " gamma ";
  std::snprintf(buf, sizeof(buf), "%.17g", kernel.gamma);
  out << buf << " coef0 ";
  std::snprintf(buf, sizeof(buf), "%.17g", kernel.coef0);
  out << buf << " degree " << kernel.degree << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", C);
  out << "C " << buf << " class_weight " << (class_weight ? 1 : 0) << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", bias);
  out << "bias " << buf << "\n";
  out << "sv " << support_x.rows << " dim " << support_x.cols << "\n";
  for (int64_t i = 0; i < support_x.rows; ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", alpha[static_cast<size_t>(i)]);
    out << buf << " " << labels[static_cast<size_t>(i)];
    for (int64_t j = 0; j < support_x.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", support_x.at(i, j));
      out << " " << buf;
    }
    out << "\n";
  }
}

TrainedSvm TrainedSvm::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("svm load: cannot open " + path);
  std::string line, word;
  TrainedSvm m;
  if (!std::getline(in, line) || line.rfind("av-svm", 0) != 0)
    throw std::runtime_error("svm load: bad header in " + path);
  std::string kname;
  in >> word >> kname >> word >> m.kernel.gamma >> word >> m.kernel.coef0 >> word >> m.kernel.degree;
  m.kernel.kind = kernel_from_name(kname);
  int cw = 0;
  in >> word >> m.C >> word >> cw;
  m.class_weight = cw != 0;
  in >> word >> m.bias;
  int64_t n = 0, dim = 0;
  in >> word >> n >> word >> dim;
  if (!in) throw std::runtime_error("svm load: malformed header fields");
  m.support_x = nn::Mat(n, dim);
  m.alpha.resize(static_cast<size_t>(n));
  m.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    in >> m.alpha[static_cast<size_t>(i)] >> m.labels[static_cast<size_t>(i)];
    for (int64_t j = 0; j < dim; ++j) in >> m.support_x.at(i, j);
  }
  if (!in) throw std::runtime_error("svm load: truncated support vectors");
  return m;
}

// ---- featurizer ----

SvmFeaturizer SvmFeaturizer::fit(std::span<const corpus::Chunk> train_chunks,
                                 std::span<const int> labels,
                                 std::vector<std::string> stopwords, style::PosTagger tagger,
                                 double keep_fraction) {
  SvmFeaturizer f;
  f.base = style::BaseFeatureSpec::fit(train_chunks, std::move(stopwords), std::move(tagger));
  f.ngrams = style::fit_char_ngrams(train_chunks);
  std::vector<style::SparseVec> vecs;
  vecs.reserve(train_chunks.size());
  for (const auto& c : train_chunks) vecs.push_back(style::char_ngrams(c, f.ngrams));
  f.selected = style::chi2_select(vecs, labels, keep_fraction);
  // Unit-maximum scaling per kept feature, fit on training values.
  f.selected_max.assign(f.selected.size(), 0.0);
  std::unordered_map<int, size_t> pos;
  for (size_t k = 0; k < f.selected.size(); ++k) pos[f.selected[k]] = k;
  for (const auto& v : vecs)
    for (const auto& [idx, val] : v.items) {
      auto it = pos.find(idx);
      if (it != pos.end())
        f.selected_max[it->second] = std::max(f.selected_max[it->second], std::fabs(val));
    }
  for (auto& m : f.selected_max)
    if (m == 0.0) m = 1.0;
  return f;
}

int SvmFeaturizer::dim() const {
  return base.dim() + static_cast<int>(selected.size());
}

std::vector<double> SvmFeaturizer::transform(const corpus::Chunk& chunk) const {
  std::vector<double> out = style::extract_base_features(chunk, base);
  out.resize(static_cast<size_t>(dim()), 0.0);
  style::SparseVec v = style::char_ngrams(chunk, ngrams);
  std::unordered_map<int, size_t> pos;
  for (size_t k = 0; k < selected.size(); ++k) pos[selected[k]] = k;
  size_t base_dim = static_cast<size_t>(base.dim());
  for (const auto& [idx, val] : v.items) {
    auto it = pos.find(idx);
    if (it != pos.end()) out[base_dim + it->second] = val / selected_max[it->second];
  }
  return out;
}

}  // namespace av::clf
