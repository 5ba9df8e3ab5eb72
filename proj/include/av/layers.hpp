#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "av/rng.hpp"
#include "av/tensor.hpp"

namespace av::nn {

// Gaussian-initialized parameter matrix.
Tensor gaussian_param(int64_t r, int64_t c, double sigma, Rng& rng, std::string name);

struct Linear {
  Tensor W;  // in×out
  Tensor b;  // 1×out, undefined when bias-free
  bool has_bias = true;

  static Linear init(int64_t in, int64_t out, Rng& rng, std::string name, bool bias = true);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Tensor>& out) const;
};

// ---- GRU ----

struct GruLayerParams {
  Tensor Wz, Uz, bz;
  Tensor Wr, Ur, br;
  Tensor Wh, Uh, bh;
  void collect(std::vector<Tensor>& out) const;
};

// h' = (1 - z) ⊙ h + z ⊙ ĥ with
//   z = σ(xWz + hUz + bz), r = σ(xWr + hUr + br), ĥ = tanh(xWh + (r ⊙ h)Uh + bh)
Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruLayerParams& p);

struct GruStack {
  std::vector<GruLayerParams> layers;
  int64_t input_dim = 0;
  int64_t hidden_dim = 0;

  static GruStack init(int64_t input, int64_t hidden, int n_layers, Rng& rng,
                       const std::string& prefix);
  // X is L×input; returns L×hidden (top layer states at every position).
  Tensor forward_sequence(const Tensor& X) const;
  // Single step; `state` holds one 1×hidden tensor per layer and is updated.
  Tensor step(const Tensor& x, std::vector<Tensor>& state) const;
  std::vector<Tensor> initial_state() const;
  void collect(std::vector<Tensor>& out) const;
};

// ---- Transformer encoder ----

struct TransformerLayerParams {
  Linear q, k, v, o;
  Linear ff1, ff2;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  void collect(std::vector<Tensor>& out) const;
};

struct TransformerConfig {
  int64_t d_model = 128;
  int heads = 4;
  int64_t ffn_dim = 512;
  int layers = 2;
  bool causal = true;
};

struct TransformerEncoder {
  TransformerConfig cfg;
  std::vector<TransformerLayerParams> layers;

  static TransformerEncoder init(const TransformerConfig& cfg, Rng& rng,
                                 const std::string& prefix);
  // X is L×d_model; positional encoding is added inside. When attn_out is
  // non-null it receives the attention matrix of every (layer, head).
  Tensor forward(const Tensor& X, std::vector<Tensor>* attn_out = nullptr) const;
  void collect(std::vector<Tensor>& out) const;
};

Mat sinusoidal_encoding(int64_t length, int64_t dim);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// ---- convolutional block ----

// Two stacked valid 1-D convolutions with ReLU, then a global max-pool over
// positions: (L×in) -> conv(in→w1,k) -> conv(w1→w2,k) -> 1×w2.
struct ConvMaxBlock {
  int kernel = 3;
  int64_t in_dim = 0, w1 = 512, w2 = 256;
  Tensor W1, b1;  // (kernel*in)×w1
  Tensor W2, b2;  // (kernel*w1)×w2

  static ConvMaxBlock init(int kernel, int64_t in_dim, int64_t w1, int64_t w2, Rng& rng,
                           const std::string& prefix);
  Tensor forward(const Tensor& X) const;
  void collect(std::vector<Tensor>& out) const;
};

// Valid 1-D convolution over rows, expressed with slices and a matmul so the
// whole thing stays differentiable. W is (kernel*in)×out with column-block
// layout [tap 0 | tap 1 | ...].
Tensor conv1d(const Tensor& X, const Tensor& W, const Tensor& b, int kernel);

// ---- stochastic ops ----

// Gumbel-Softmax over each row of `logits`. hard=true returns straight-through
// one-hot samples (forward one-hot, gradient of the soft sample).
Tensor gumbel_softmax(const Tensor& logits, double tau, bool hard, Rng& rng);

// Inverted-scaling dropout; identity when training=false.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// ---- losses ----

// Mean over rows of -log softmax(logits)[target]; logits is n×V.
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int64_t> targets);

// 1 - cos(u, v) for 1×d vectors. Throws if either norm is zero.
Tensor cosine_distance(const Tensor& u, const Tensor& v);

// Weighted binary cross-entropy on a logit (sigmoid fused, numerically
// stable). targets/pos_weight broadcast against an n×1 logit column.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, double pos_weight);

}  // namespace av::nn
