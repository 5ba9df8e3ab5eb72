#include "av/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace av::nn {

namespace detail {

bool& grad_mode() {
  thread_local bool mode = true;
  return mode;
}

}  // namespace detail

using detail::Node;

namespace {

using BackwardFn = std::function<std::vector<Tensor>(const Tensor&)>;

std::shared_ptr<Node> make_leaf(int64_t r, int64_t c, std::vector<double> v,
                                bool requires_grad, std::string name) {
  if (static_cast<int64_t>(v.size()) != r * c)
    throw std::invalid_argument("tensor: value size does not match shape");
  auto n = std::make_shared<Node>();
  n->rows = r;
  n->cols = c;
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

Tensor make_op(int64_t r, int64_t c, std::vector<double> v,
               std::vector<Tensor> parents, BackwardFn bw) {
  auto n = std::make_shared<Node>();
  n->rows = r;
  n->cols = c;
  n->value = std::move(v);
  bool track = detail::grad_mode();
  if (track) {
    bool any = false;
    for (const auto& p : parents)
      if (p.requires_grad()) any = true;
    track = any;
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(bw);
  }
  return Tensor(n);
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

// Broadcast helpers: extents must match or be 1.
bool bcast_ok(int64_t a, int64_t b) { return a == b || a == 1 || b == 1; }

// Sums `g` down to shape (r, c); identity when shapes already agree.
Tensor reduce_to(const Tensor& g, int64_t r, int64_t c) {
  Tensor out = g;
  if (out.rows() != r) {
    if (r != 1) throw std::logic_error("reduce_to: incompatible rows");
    out = col_sum(out);
  }
  if (out.cols() != c) {
    if (c != 1) throw std::logic_error("reduce_to: incompatible cols");
    out = row_sum(out);
  }
  return out;
}

template <class F>
Tensor binary_op(const Tensor& a, const Tensor& b, F f, BackwardFn bw,
                 const char* opname) {
  check_defined(a, opname);
  check_defined(b, opname);
  if (!bcast_ok(a.rows(), b.rows()) || !bcast_ok(a.cols(), b.cols()))
    throw std::invalid_argument(std::string(opname) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  int64_t r = std::max(a.rows(), b.rows());
  int64_t c = std::max(a.cols(), b.cols());
  std::vector<double> out(static_cast<size_t>(r * c));
  const auto& av = a.values();
  const auto& bv = b.values();
  int64_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  for (int64_t i = 0; i < r; ++i) {
    int64_t ia = (ar == 1) ? 0 : i;
    int64_t ib = (br == 1) ? 0 : i;
    for (int64_t j = 0; j < c; ++j) {
      int64_t ja = (ac == 1) ? 0 : j;
      int64_t jb = (bc == 1) ? 0 : j;
      out[static_cast<size_t>(i * c + j)] =
          f(av[static_cast<size_t>(ia * ac + ja)], bv[static_cast<size_t>(ib * bc + jb)]);
    }
  }
  return make_op(r, c, std::move(out), {a, b}, std::move(bw));
}

std::vector<double> const_map(const Tensor& a, double (*f)(double)) {
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.values()[i]);
  return out;
}

// Unary op whose local derivative is captured as a detached constant.
Tensor unary_with_const_deriv(const Tensor& a, std::vector<double> value,
                              std::vector<double> deriv) {
  int64_t r = a.rows(), c = a.cols();
  Tensor d = Tensor::from(r, c, std::move(deriv));
  return make_op(r, c, std::move(value), {a},
                 [d](const Tensor& g) { return std::vector<Tensor>{mul(g, d)}; });
}

}  // namespace

// ---- Tensor basics ----

Tensor Tensor::zeros(int64_t r, int64_t c) {
  return Tensor(make_leaf(r, c, std::vector<double>(static_cast<size_t>(r * c), 0.0), false, ""));
}

Tensor Tensor::full(int64_t r, int64_t c, double v) {
  return Tensor(make_leaf(r, c, std::vector<double>(static_cast<size_t>(r * c), v), false, ""));
}

Tensor Tensor::scalar(double v) { return full(1, 1, v); }

Tensor Tensor::from(int64_t r, int64_t c, std::vector<double> v) {
  return Tensor(make_leaf(r, c, std::move(v), false, ""));
}

Tensor Tensor::from(const Mat& m) { return from(m.rows, m.cols, m.v); }

Tensor Tensor::param(int64_t r, int64_t c, std::vector<double> v, std::string name) {
  return Tensor(make_leaf(r, c, std::move(v), true, std::move(name)));
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
  return node_->value[0];
}

Mat Tensor::to_mat() const {
  Mat m(rows(), cols());
  m.v = node_->value;
  return m;
}

void Tensor::set_values(std::span<const double> v) {
  if (!is_leaf()) throw std::logic_error("Tensor::set_values: not a leaf");
  if (static_cast<int64_t>(v.size()) != size())
    throw std::invalid_argument("Tensor::set_values: size mismatch");
  std::copy(v.begin(), v.end(), node_->value.begin());
}

std::vector<double>& Tensor::grad() {
  if (node_->grad.empty()) node_->grad.assign(static_cast<size_t>(size()), 0.0);
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(static_cast<size_t>(size()), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(static_cast<size_t>(size()), 0.0); }

Tensor Tensor::detach() const {
  return Tensor(make_leaf(rows(), cols(), node_->value, false, ""));
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  int64_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [ar, ac, br, bc](const Tensor& g) {
        return std::vector<Tensor>{reduce_to(g, ar, ac), reduce_to(g, br, bc)};
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  int64_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [ar, ac, br, bc](const Tensor& g) {
        return std::vector<Tensor>{reduce_to(g, ar, ac), reduce_to(neg(g), br, bc)};
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [a, b](const Tensor& g) {
        return std::vector<Tensor>{reduce_to(mul(g, b), a.rows(), a.cols()),
                                   reduce_to(mul(g, a), b.rows(), b.cols())};
      },
      "mul");
}

Tensor divide(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [a, b](const Tensor& g) {
        Tensor ga = reduce_to(divide(g, b), a.rows(), a.cols());
        Tensor gb = reduce_to(neg(mul(g, divide(a, mul(b, b)))), b.rows(), b.cols());
        return std::vector<Tensor>{ga, gb};
      },
      "divide");
}

Tensor neg(const Tensor& a) {
  check_defined(a, "neg");
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = -a.values()[i];
  return make_op(a.rows(), a.cols(), std::move(out), {a},
                 [](const Tensor& g) { return std::vector<Tensor>{neg(g)}; });
}

Tensor scale(const Tensor& a, double s) {
  check_defined(a, "scale");
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  return make_op(a.rows(), a.cols(), std::move(out), {a},
                 [s](const Tensor& g) { return std::vector<Tensor>{scale(g, s)}; });
}

Tensor add_scalar(const Tensor& a, double s) {
  check_defined(a, "add_scalar");
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + s;
  return make_op(a.rows(), a.cols(), std::move(out), {a},
                 [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

// ---- activations ----

Tensor relu(const Tensor& a) {
  check_defined(a, "relu");
  std::vector<double> out(a.values().size());
  std::vector<double> mask(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    bool pos = a.values()[i] > 0.0;
    out[i] = pos ? a.values()[i] : 0.0;
    mask[i] = pos ? 1.0 : 0.0;
  }
  return unary_with_const_deriv(a, std::move(out), std::move(mask));
}

Tensor tanh_act(const Tensor& a) {
  auto y = const_map(a, [](double x) { return std::tanh(x); });
  std::vector<double> d(y.size());
  for (size_t i = 0; i < y.size(); ++i) d[i] = 1.0 - y[i] * y[i];
  return unary_with_const_deriv(a, std::move(y), std::move(d));
}

Tensor sigmoid_act(const Tensor& a) {
  auto y = const_map(a, [](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  std::vector<double> d(y.size());
  for (size_t i = 0; i < y.size(); ++i) d[i] = y[i] * (1.0 - y[i]);
  return unary_with_const_deriv(a, std::move(y), std::move(d));
}

Tensor exp_act(const Tensor& a) {
  auto y = const_map(a, [](double x) { return std::exp(x); });
  auto d = y;
  return unary_with_const_deriv(a, std::move(y), std::move(d));
}

Tensor log_act(const Tensor& a) {
  check_defined(a, "log");
  auto y = const_map(a, [](double x) { return std::log(x); });
  return make_op(a.rows(), a.cols(), std::move(y), {a},
                 [a](const Tensor& g) { return std::vector<Tensor>{divide(g, a)}; });
}

Tensor sqrt_act(const Tensor& a) {
  auto y = const_map(a, [](double x) { return std::sqrt(x); });
  std::vector<double> d(y.size());
  for (size_t i = 0; i < y.size(); ++i) d[i] = 0.5 / y[i];
  return unary_with_const_deriv(a, std::move(y), std::move(d));
}

Tensor softplus(const Tensor& a) {
  auto y = const_map(a, [](double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
  });
  std::vector<double> d(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    double x = a.values()[i];
    d[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return unary_with_const_deriv(a, std::move(y), std::move(d));
}

// ---- linear algebra / shape ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions differ (" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + ")");
  int64_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  for (int64_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    const double* arow = ap + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      double aval = arow[kk];
      if (aval == 0.0) continue;
      const double* brow = bp + kk * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aval * brow[j];
    }
  }
  return make_op(m, n, std::move(out), {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{matmul(g, transpose(b)), matmul(transpose(a), g)};
  });
}

Tensor transpose(const Tensor& a) {
  check_defined(a, "transpose");
  int64_t r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<size_t>(r * c));
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j)
      out[static_cast<size_t>(j * r + i)] = a.values()[static_cast<size_t>(i * c + j)];
  return make_op(c, r, std::move(out), {a},
                 [](const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

Tensor reshape(const Tensor& a, int64_t r, int64_t c) {
  check_defined(a, "reshape");
  if (r * c != a.size()) throw std::invalid_argument("reshape: element count differs");
  int64_t ar = a.rows(), ac = a.cols();
  return make_op(r, c, a.values(), {a}, [ar, ac](const Tensor& g) {
    return std::vector<Tensor>{reshape(g, ar, ac)};
  });
}

Tensor slice_rows(const Tensor& a, int64_t r0, int64_t r1) {
  check_defined(a, "slice_rows");
  if (r0 < 0 || r1 > a.rows() || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range");
  int64_t c = a.cols(), n = r1 - r0, total = a.rows();
  std::vector<double> out(a.values().begin() + r0 * c, a.values().begin() + r1 * c);
  return make_op(n, c, std::move(out), {a}, [r0, r1, total, c](const Tensor& g) {
    std::vector<Tensor> parts;
    if (r0 > 0) parts.push_back(Tensor::zeros(r0, c));
    parts.push_back(g);
    if (r1 < total) parts.push_back(Tensor::zeros(total - r1, c));
    return std::vector<Tensor>{concat_rows(parts)};
  });
}

Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1) {
  check_defined(a, "slice_cols");
  if (c0 < 0 || c1 > a.cols() || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range");
  int64_t r = a.rows(), c = a.cols(), n = c1 - c0;
  std::vector<double> out(static_cast<size_t>(r * n));
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[static_cast<size_t>(i * n + j)] = a.values()[static_cast<size_t>(i * c + c0 + j)];
  return make_op(r, n, std::move(out), {a}, [c0, c1, r, c](const Tensor& g) {
    std::vector<Tensor> parts;
    if (c0 > 0) parts.push_back(Tensor::zeros(r, c0));
    parts.push_back(g);
    if (c1 < c) parts.push_back(Tensor::zeros(r, c - c1));
    return std::vector<Tensor>{concat_cols(parts)};
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
  int64_t c = parts[0].cols(), r = 0;
  for (const auto& p : parts) {
    check_defined(p, "concat_rows");
    if (p.cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
    r += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(r * c));
  std::vector<int64_t> row_of(parts.size());
  int64_t acc = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    row_of[i] = acc;
    acc += parts[i].rows();
    out.insert(out.end(), parts[i].values().begin(), parts[i].values().end());
  }
  std::vector<Tensor> owned(parts.begin(), parts.end());
  std::vector<int64_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.rows());
  return make_op(r, c, std::move(out), owned, [row_of, sizes](const Tensor& g) {
    std::vector<Tensor> gs;
    for (size_t i = 0; i < sizes.size(); ++i)
      gs.push_back(slice_rows(g, row_of[i], row_of[i] + sizes[i]));
    return gs;
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
  int64_t r = parts[0].rows(), c = 0;
  for (const auto& p : parts) {
    check_defined(p, "concat_cols");
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
    c += p.cols();
  }
  std::vector<double> out(static_cast<size_t>(r * c));
  std::vector<int64_t> col_of(parts.size());
  int64_t acc = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    col_of[i] = acc;
    int64_t pc = parts[i].cols();
    for (int64_t row = 0; row < r; ++row)
      for (int64_t j = 0; j < pc; ++j)
        out[static_cast<size_t>(row * c + acc + j)] =
            parts[i].values()[static_cast<size_t>(row * pc + j)];
    acc += pc;
  }
  std::vector<Tensor> owned(parts.begin(), parts.end());
  std::vector<int64_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.cols());
  return make_op(r, c, std::move(out), owned, [col_of, sizes](const Tensor& g) {
    std::vector<Tensor> gs;
    for (size_t i = 0; i < sizes.size(); ++i)
      gs.push_back(slice_cols(g, col_of[i], col_of[i] + sizes[i]));
    return gs;
  });
}

Tensor select_rows(const Tensor& a, std::vector<int64_t> idx) {
  check_defined(a, "select_rows");
  int64_t c = a.cols(), rows = a.rows();
  std::vector<double> out(idx.size() * static_cast<size_t>(c));
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= rows) throw std::invalid_argument("select_rows: index out of range");
    std::copy(a.values().begin() + idx[i] * c, a.values().begin() + (idx[i] + 1) * c,
              out.begin() + static_cast<int64_t>(i) * c);
  }
  int64_t n = static_cast<int64_t>(idx.size());
  return make_op(n, c, std::move(out), {a}, [idx = std::move(idx), rows](const Tensor& g) {
    return std::vector<Tensor>{scatter_rows(g, idx, rows)};
  });
}

Tensor scatter_rows(const Tensor& a, std::vector<int64_t> idx, int64_t out_rows) {
  check_defined(a, "scatter_rows");
  if (static_cast<int64_t>(idx.size()) != a.rows())
    throw std::invalid_argument("scatter_rows: index count must match rows");
  int64_t c = a.cols();
  std::vector<double> out(static_cast<size_t>(out_rows * c), 0.0);
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= out_rows) throw std::invalid_argument("scatter_rows: index out of range");
    for (int64_t j = 0; j < c; ++j)
      out[static_cast<size_t>(idx[i] * c + j)] += a.values()[i * static_cast<size_t>(c) + static_cast<size_t>(j)];
  }
  return make_op(out_rows, c, std::move(out), {a}, [idx = std::move(idx)](const Tensor& g) {
    return std::vector<Tensor>{select_rows(g, idx)};
  });
}

Tensor scatter_elems(const Tensor& a, std::vector<int64_t> row_idx, int64_t out_rows) {
  check_defined(a, "scatter_elems");
  if (a.rows() != 1 || static_cast<int64_t>(row_idx.size()) != a.cols())
    throw std::invalid_argument("scatter_elems: expects 1×c input with c indices");
  int64_t c = a.cols();
  std::vector<double> out(static_cast<size_t>(out_rows * c), 0.0);
  for (int64_t j = 0; j < c; ++j) {
    if (row_idx[j] < 0 || row_idx[j] >= out_rows)
      throw std::invalid_argument("scatter_elems: index out of range");
    out[static_cast<size_t>(row_idx[j] * c + j)] = a.values()[static_cast<size_t>(j)];
  }
  return make_op(out_rows, c, std::move(out), {a}, [row_idx = std::move(row_idx)](const Tensor& g) {
    return std::vector<Tensor>{gather_elems(g, row_idx)};
  });
}

Tensor gather_elems(const Tensor& a, std::vector<int64_t> row_idx) {
  check_defined(a, "gather_elems");
  if (static_cast<int64_t>(row_idx.size()) != a.cols())
    throw std::invalid_argument("gather_elems: one row index per column required");
  int64_t c = a.cols(), rows = a.rows();
  std::vector<double> out(static_cast<size_t>(c));
  for (int64_t j = 0; j < c; ++j) {
    if (row_idx[j] < 0 || row_idx[j] >= rows)
      throw std::invalid_argument("gather_elems: index out of range");
    out[static_cast<size_t>(j)] = a.values()[static_cast<size_t>(row_idx[j] * c + j)];
  }
  return make_op(1, c, std::move(out), {a}, [row_idx = std::move(row_idx), rows](const Tensor& g) {
    return std::vector<Tensor>{scatter_elems(g, row_idx, rows)};
  });
}

// ---- reductions ----

Tensor sum_all(const Tensor& a) {
  check_defined(a, "sum_all");
  double s = 0.0;
  for (double v : a.values()) s += v;
  int64_t r = a.rows(), c = a.cols();
  return make_op(1, 1, {s}, {a}, [r, c](const Tensor& g) {
    return std::vector<Tensor>{add(Tensor::zeros(r, c), g)};
  });
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor row_sum(const Tensor& a) {
  check_defined(a, "row_sum");
  int64_t r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<size_t>(r), 0.0);
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(i)] += a.at(i, j);
  return make_op(r, 1, std::move(out), {a}, [r, c](const Tensor& g) {
    return std::vector<Tensor>{add(Tensor::zeros(r, c), g)};
  });
}

Tensor col_sum(const Tensor& a) {
  check_defined(a, "col_sum");
  int64_t r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(j)] += a.at(i, j);
  return make_op(1, c, std::move(out), {a}, [r, c](const Tensor& g) {
    return std::vector<Tensor>{add(Tensor::zeros(r, c), g)};
  });
}

Tensor max_over_rows(const Tensor& a) {
  check_defined(a, "max_over_rows");
  int64_t r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<size_t>(c));
  std::vector<int64_t> arg(static_cast<size_t>(c), 0);
  for (int64_t j = 0; j < c; ++j) {
    double best = a.at(0, j);
    int64_t bi = 0;
    for (int64_t i = 1; i < r; ++i) {
      if (a.at(i, j) > best) {
        best = a.at(i, j);
        bi = i;
      }
    }
    out[static_cast<size_t>(j)] = best;
    arg[static_cast<size_t>(j)] = bi;
  }
  return make_op(1, c, std::move(out), {a}, [arg = std::move(arg), r](const Tensor& g) {
    return std::vector<Tensor>{scatter_elems(g, arg, r)};
  });
}

// ---- softmax family ----

namespace {
// Detached per-row max, used as a stabilizing shift.
Tensor row_max_const(const Tensor& a) {
  int64_t r = a.rows(), c = a.cols();
  std::vector<double> m(static_cast<size_t>(r), -std::numeric_limits<double>::infinity());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) m[static_cast<size_t>(i)] = std::max(m[static_cast<size_t>(i)], a.at(i, j));
  // Guard all -inf rows (fully masked) so exp(x - m) stays defined.
  for (auto& v : m)
    if (!std::isfinite(v)) v = 0.0;
  return Tensor::from(r, 1, std::move(m));
}
}  // namespace

Tensor softmax_rows(const Tensor& a) {
  Tensor shifted = sub(a, row_max_const(a));
  Tensor e = exp_act(shifted);
  return divide(e, row_sum(e));
}

Tensor log_softmax_rows(const Tensor& a) {
  Tensor shifted = sub(a, row_max_const(a));
  Tensor lse = log_act(row_sum(exp_act(shifted)));
  return sub(shifted, lse);
}

// ---- autodiff ----

namespace {

// Topological order of the requires_grad subgraph rooted at `root`.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next].get();
      ++next;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

std::unordered_map<Node*, Tensor> run_backward(const Tensor& output, bool create_graph) {
  if (output.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  std::unordered_map<Node*, Tensor> acc;
  if (!output.requires_grad()) return acc;

  auto order = topo_order(output.node().get());

  std::unique_ptr<NoGrad> guard;
  if (!create_graph) guard = std::make_unique<NoGrad>();

  acc.emplace(output.node().get(), Tensor::full(1, 1, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    auto found = acc.find(node);
    if (found == acc.end()) continue;
    std::vector<Tensor> pgrads = node->backward(found->second);
    if (pgrads.size() != node->parents.size())
      throw std::logic_error("backward: gradient count mismatch");
    for (size_t i = 0; i < pgrads.size(); ++i) {
      Node* parent = node->parents[i].get();
      if (!parent->requires_grad) continue;
      auto cur = acc.find(parent);
      if (cur == acc.end())
        acc.emplace(parent, pgrads[i]);
      else
        cur->second = add(cur->second, pgrads[i]);
    }
  }
  return acc;
}

}  // namespace

void backward(const Tensor& loss) {
  auto acc = run_backward(loss, /*create_graph=*/false);
  for (auto& [node, g] : acc) {
    if (node->backward) continue;  // interior node
    if (!node->requires_grad) continue;
    if (node->grad.empty()) node->grad.assign(static_cast<size_t>(node->size()), 0.0);
    const auto& gv = g.values();
    for (size_t i = 0; i < gv.size(); ++i) node->grad[i] += gv[i];
  }
}

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs,
                         bool create_graph) {
  auto acc = run_backward(output, create_graph);
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto it = acc.find(in.node().get());
    if (it == acc.end())
      out.push_back(Tensor::zeros(in.rows(), in.cols()));
    else
      out.push_back(it->second);
  }
  return out;
}

}  // namespace av::nn
