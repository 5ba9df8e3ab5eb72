#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace av::nn {

// Plain matrix for data that never enters the autodiff graph.
struct Mat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int64_t r, int64_t c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {}

  double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
  int64_t size() const { return rows * cols; }
};

class Tensor;

namespace detail {

struct Node {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // leaves only; filled by backward()
  bool requires_grad = false;
  std::string name;  // parameters only
  std::vector<std::shared_ptr<Node>> parents;
  // Maps the gradient w.r.t. this node to gradients w.r.t. each parent.
  // Built from tensor ops so that gradients can themselves be differentiated
  // (needed for the gradient penalty). Backward functions of the smooth
  // activations capture their local derivative as a constant; exact
  // second-order gradients therefore exist through the piecewise-linear ops
  // only (linear, relu, max, slice/concat/select), which is all the critic
  // path uses.
  std::function<std::vector<Tensor>(const Tensor&)> backward;

  int64_t size() const { return rows * cols; }
};

bool& grad_mode();

}  // namespace detail

// RAII guard that disables graph recording (forward values only).
class NoGrad {
 public:
  NoGrad() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGrad() { detail::grad_mode() = prev_; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

  static Tensor zeros(int64_t r, int64_t c);
  static Tensor full(int64_t r, int64_t c, double v);
  static Tensor scalar(double v);
  static Tensor from(int64_t r, int64_t c, std::vector<double> v);
  static Tensor from(const Mat& m);
  // Leaf with requires_grad=true; `name` identifies it in checkpoints.
  static Tensor param(int64_t r, int64_t c, std::vector<double> v, std::string name = "");

  bool defined() const { return node_ != nullptr; }
  int64_t rows() const { return node_->rows; }
  int64_t cols() const { return node_->cols; }
  int64_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return !static_cast<bool>(node_->backward); }
  const std::string& name() const { return node_->name; }

  const std::vector<double>& values() const { return node_->value; }
  double item() const;
  double at(int64_t r, int64_t c) const { return node_->value[static_cast<size_t>(r * node_->cols + c)]; }
  Mat to_mat() const;

  // Leaf-only mutation used by optimizers and checkpoint loading.
  void set_values(std::span<const double> v);
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  Tensor detach() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- elementwise (broadcasting: equal extents, or extent 1 on either side) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

// ---- activations ----
Tensor relu(const Tensor& a);
Tensor tanh_act(const Tensor& a);
Tensor sigmoid_act(const Tensor& a);
Tensor exp_act(const Tensor& a);
Tensor log_act(const Tensor& a);
Tensor sqrt_act(const Tensor& a);
Tensor softplus(const Tensor& a);

// ---- linear algebra / shape ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, int64_t r, int64_t c);
Tensor slice_rows(const Tensor& a, int64_t r0, int64_t r1);
Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
// out[i, :] = a[idx[i], :]
Tensor select_rows(const Tensor& a, std::vector<int64_t> idx);
// out[idx[i], :] += a[i, :]
Tensor scatter_rows(const Tensor& a, std::vector<int64_t> idx, int64_t out_rows);
// a is 1×c; out[row_idx[j], j] = a[0, j]
Tensor scatter_elems(const Tensor& a, std::vector<int64_t> row_idx, int64_t out_rows);
// out[0, j] = a[row_idx[j], j]
Tensor gather_elems(const Tensor& a, std::vector<int64_t> row_idx);

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor row_sum(const Tensor& a);  // r×c -> r×1
Tensor col_sum(const Tensor& a);  // r×c -> 1×c
// column-wise max over rows -> 1×c; argmax detached, first occurrence wins
Tensor max_over_rows(const Tensor& a);

// ---- softmax family (row-wise, numerically stable) ----
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

// ---- autodiff entry points ----

// Accumulates d(loss)/d(leaf) into the .grad buffer of every reachable leaf
// with requires_grad. `loss` must be scalar. Repeated calls accumulate.
void backward(const Tensor& loss);

// Gradients of a scalar `output` w.r.t. `inputs`. With create_graph=true the
// returned tensors stay connected to the graph and can be differentiated
// again. Unreachable inputs yield zero tensors.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs,
                         bool create_graph);

}  // namespace av::nn
