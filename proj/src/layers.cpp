#include "av/layers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace av::nn {

Tensor gaussian_param(int64_t r, int64_t c, double sigma, Rng& rng, std::string name) {
  std::vector<double> v(static_cast<size_t>(r * c));
  for (auto& x : v) x = sigma * rng.normal();
  return Tensor::param(r, c, std::move(v), std::move(name));
}

// ---- Linear ----

Linear Linear::init(int64_t in, int64_t out, Rng& rng, std::string name, bool bias) {
  Linear l;
  double sigma = std::sqrt(2.0 / static_cast<double>(in));
  l.W = gaussian_param(in, out, sigma, rng, name + ".W");
  l.has_bias = bias;
  if (bias) l.b = Tensor::param(1, out, std::vector<double>(static_cast<size_t>(out), 0.0), name + ".b");
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, W);
  if (has_bias) y = add(y, b);
  return y;
}

void Linear::collect(std::vector<Tensor>& out) const {
  out.push_back(W);
  if (has_bias) out.push_back(b);
}

// ---- GRU ----

void GruLayerParams::collect(std::vector<Tensor>& out) const {
  out.insert(out.end(), {Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh});
}

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruLayerParams& p) {
  if (x.cols() != p.Wz.rows() || h_prev.cols() != p.Uz.rows())
    throw std::invalid_argument("gru_cell: dimension mismatch");
  Tensor z = sigmoid_act(add(add(matmul(x, p.Wz), matmul(h_prev, p.Uz)), p.bz));
  Tensor r = sigmoid_act(add(add(matmul(x, p.Wr), matmul(h_prev, p.Ur)), p.br));
  Tensor cand = tanh_act(add(add(matmul(x, p.Wh), matmul(mul(r, h_prev), p.Uh)), p.bh));
  // (1-z)⊙h + z⊙ĥ rewritten as h + z⊙(ĥ - h)
  return add(h_prev, mul(z, sub(cand, h_prev)));
}

GruStack GruStack::init(int64_t input, int64_t hidden, int n_layers, Rng& rng,
                        const std::string& prefix) {
  GruStack s;
  s.input_dim = input;
  s.hidden_dim = hidden;
  for (int l = 0; l < n_layers; ++l) {
    int64_t in = (l == 0) ? input : hidden;
    GruLayerParams p;
    auto mk = [&](int64_t r, int64_t c, const char* tag) {
      return gaussian_param(r, c, std::sqrt(1.0 / static_cast<double>(r)), rng,
                            prefix + ".l" + std::to_string(l) + "." + tag);
    };
    auto mkb = [&](const char* tag) {
      return Tensor::param(1, hidden, std::vector<double>(static_cast<size_t>(hidden), 0.0),
                           prefix + ".l" + std::to_string(l) + "." + tag);
    };
    p.Wz = mk(in, hidden, "Wz"); p.Uz = mk(hidden, hidden, "Uz"); p.bz = mkb("bz");
    p.Wr = mk(in, hidden, "Wr"); p.Ur = mk(hidden, hidden, "Ur"); p.br = mkb("br");
    p.Wh = mk(in, hidden, "Wh"); p.Uh = mk(hidden, hidden, "Uh"); p.bh = mkb("bh");
    s.layers.push_back(std::move(p));
  }
  return s;
}

std::vector<Tensor> GruStack::initial_state() const {
  std::vector<Tensor> state;
  state.reserve(layers.size());
  for (size_t l = 0; l < layers.size(); ++l) state.push_back(Tensor::zeros(1, hidden_dim));
  return state;
}

Tensor GruStack::step(const Tensor& x, std::vector<Tensor>& state) const {
  Tensor cur = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    state[l] = gru_cell(cur, state[l], layers[l]);
    cur = state[l];
  }
  return cur;
}

Tensor GruStack::forward_sequence(const Tensor& X) const {
  int64_t L = X.rows();
  auto state = initial_state();
  std::vector<Tensor> outputs;
  outputs.reserve(static_cast<size_t>(L));
  for (int64_t t = 0; t < L; ++t) {
    Tensor x = slice_rows(X, t, t + 1);
    outputs.push_back(step(x, state));
  }
  return concat_rows(outputs);
}

void GruStack::collect(std::vector<Tensor>& out) const {
  for (const auto& l : layers) l.collect(out);
}

// ---- Transformer ----

void TransformerLayerParams::collect(std::vector<Tensor>& out) const {
  q.collect(out); k.collect(out); v.collect(out); o.collect(out);
  ff1.collect(out); ff2.collect(out);
  out.insert(out.end(), {ln1_g, ln1_b, ln2_g, ln2_b});
}

Mat sinusoidal_encoding(int64_t length, int64_t dim) {
  Mat pe(length, dim);
  for (int64_t pos = 0; pos < length; ++pos) {
    for (int64_t i = 0; i < dim; i += 2) {
      double angle = static_cast<double>(pos) /
                     std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pe.at(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  double d = static_cast<double>(x.cols());
  Tensor mu = scale(row_sum(x), 1.0 / d);
  Tensor centered = sub(x, mu);
  Tensor var = scale(row_sum(mul(centered, centered)), 1.0 / d);
  Tensor norm = divide(centered, sqrt_act(add_scalar(var, eps)));
  return add(mul(norm, gamma), beta);
}

TransformerEncoder TransformerEncoder::init(const TransformerConfig& cfg, Rng& rng,
                                            const std::string& prefix) {
  if (cfg.d_model % cfg.heads != 0)
    throw std::invalid_argument("transformer: d_model must be divisible by head count");
  TransformerEncoder enc;
  enc.cfg = cfg;
  for (int l = 0; l < cfg.layers; ++l) {
    TransformerLayerParams p;
    std::string base = prefix + ".l" + std::to_string(l);
    p.q = Linear::init(cfg.d_model, cfg.d_model, rng, base + ".q");
    p.k = Linear::init(cfg.d_model, cfg.d_model, rng, base + ".k");
    p.v = Linear::init(cfg.d_model, cfg.d_model, rng, base + ".v");
    p.o = Linear::init(cfg.d_model, cfg.d_model, rng, base + ".o");
    p.ff1 = Linear::init(cfg.d_model, cfg.ffn_dim, rng, base + ".ff1");
    p.ff2 = Linear::init(cfg.ffn_dim, cfg.d_model, rng, base + ".ff2");
    auto ones_p = [&](const char* tag) {
      return Tensor::param(1, cfg.d_model, std::vector<double>(static_cast<size_t>(cfg.d_model), 1.0), base + tag);
    };
    auto zeros_p = [&](const char* tag) {
      return Tensor::param(1, cfg.d_model, std::vector<double>(static_cast<size_t>(cfg.d_model), 0.0), base + tag);
    };
    p.ln1_g = ones_p(".ln1_g"); p.ln1_b = zeros_p(".ln1_b");
    p.ln2_g = ones_p(".ln2_g"); p.ln2_b = zeros_p(".ln2_b");
    enc.layers.push_back(std::move(p));
  }
  return enc;
}

Tensor TransformerEncoder::forward(const Tensor& X_in, std::vector<Tensor>* attn_out) const {
  int64_t L = X_in.rows();
  if (X_in.cols() != cfg.d_model)
    throw std::invalid_argument("transformer: input dim must equal d_model");
  Tensor X = add(X_in, Tensor::from(sinusoidal_encoding(L, cfg.d_model)));

  Tensor mask;  // L×L additive mask, -inf strictly above the diagonal
  if (cfg.causal) {
    Mat m(L, L, 0.0);
    double ninf = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < L; ++i)
      for (int64_t j = i + 1; j < L; ++j) m.at(i, j) = ninf;
    mask = Tensor::from(m);
  }

  int64_t hd = cfg.d_model / cfg.heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  for (const auto& p : layers) {
    Tensor Q = p.q.forward(X), K = p.k.forward(X), V = p.v.forward(X);
    std::vector<Tensor> heads;
    for (int h = 0; h < cfg.heads; ++h) {
      Tensor Qh = slice_cols(Q, h * hd, (h + 1) * hd);
      Tensor Kh = slice_cols(K, h * hd, (h + 1) * hd);
      Tensor Vh = slice_cols(V, h * hd, (h + 1) * hd);
      Tensor scores = scale(matmul(Qh, transpose(Kh)), inv_sqrt);
      if (cfg.causal) scores = add(scores, mask);
      Tensor attn = softmax_rows(scores);
      if (attn_out) attn_out->push_back(attn);
      heads.push_back(matmul(attn, Vh));
    }
    Tensor attn_cat = p.o.forward(concat_cols(heads));
    X = layer_norm(add(X, attn_cat), p.ln1_g, p.ln1_b);
    Tensor ff = p.ff2.forward(relu(p.ff1.forward(X)));
    X = layer_norm(add(X, ff), p.ln2_g, p.ln2_b);
  }
  return X;
}

void TransformerEncoder::collect(std::vector<Tensor>& out) const {
  for (const auto& l : layers) l.collect(out);
}

// ---- convolution ----

Tensor conv1d(const Tensor& X, const Tensor& W, const Tensor& b, int kernel) {
  int64_t L = X.rows(), in = X.cols();
  if (L < kernel) throw std::invalid_argument("conv1d: sequence too short");
  if (W.rows() != static_cast<int64_t>(kernel) * in)
    throw std::invalid_argument("conv1d: weight shape mismatch");
  int64_t Lout = L - kernel + 1;
  std::vector<Tensor> taps;
  taps.reserve(static_cast<size_t>(kernel));
  for (int t = 0; t < kernel; ++t) taps.push_back(slice_rows(X, t, t + Lout));
  Tensor cols = concat_cols(taps);  // Lout×(kernel*in)
  return add(matmul(cols, W), b);
}

ConvMaxBlock ConvMaxBlock::init(int kernel, int64_t in_dim, int64_t w1, int64_t w2, Rng& rng,
                                const std::string& prefix) {
  ConvMaxBlock blk;
  blk.kernel = kernel;
  blk.in_dim = in_dim;
  blk.w1 = w1;
  blk.w2 = w2;
  blk.W1 = gaussian_param(kernel * in_dim, w1, std::sqrt(2.0 / static_cast<double>(kernel * in_dim)),
                          rng, prefix + ".W1");
  blk.b1 = Tensor::param(1, w1, std::vector<double>(static_cast<size_t>(w1), 0.0), prefix + ".b1");
  blk.W2 = gaussian_param(kernel * w1, w2, std::sqrt(2.0 / static_cast<double>(kernel * w1)),
                          rng, prefix + ".W2");
  blk.b2 = Tensor::param(1, w2, std::vector<double>(static_cast<size_t>(w2), 0.0), prefix + ".b2");
  return blk;
}

Tensor ConvMaxBlock::forward(const Tensor& X) const {
  if (X.rows() < kernel || X.rows() - kernel + 1 < kernel)
    throw std::invalid_argument("conv block: sequence too short");
  Tensor h1 = relu(conv1d(X, W1, b1, kernel));
  Tensor h2 = relu(conv1d(h1, W2, b2, kernel));
  return max_over_rows(h2);
}

void ConvMaxBlock::collect(std::vector<Tensor>& out) const {
  out.insert(out.end(), {W1, b1, W2, b2});
}

// ---- stochastic ops ----

Tensor gumbel_softmax(const Tensor& logits, double tau, bool hard, Rng& rng) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  int64_t r = logits.rows(), c = logits.cols();
  std::vector<double> noise(static_cast<size_t>(r * c));
  for (auto& g : noise) g = -std::log(-std::log(rng.uniform_open()));
  Tensor perturbed = add(log_softmax_rows(logits), Tensor::from(r, c, std::move(noise)));
  Tensor soft = softmax_rows(scale(perturbed, 1.0 / tau));
  if (!hard) return soft;
  // Straight-through: forward one-hot, gradient of the soft sample.
  std::vector<double> shift(static_cast<size_t>(r * c), 0.0);
  for (int64_t i = 0; i < r; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (soft.at(i, j) > soft.at(i, best)) best = j;
    for (int64_t j = 0; j < c; ++j) {
      double target = (j == best) ? 1.0 : 0.0;
      shift[static_cast<size_t>(i * c + j)] = target - soft.at(i, j);
    }
  }
  return add(soft, Tensor::from(r, c, std::move(shift)));
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!training || p == 0.0) return x;
  double keep = 1.0 - p;
  std::vector<double> mask(x.values().size());
  for (auto& m : mask) m = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
  return mul(x, Tensor::from(x.rows(), x.cols(), std::move(mask)));
}

// ---- losses ----

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int64_t> targets) {
  if (static_cast<int64_t>(targets.size()) != logits.rows())
    throw std::invalid_argument("cross_entropy: one target per row required");
  Tensor lsm = log_softmax_rows(logits);
  std::vector<int64_t> col_idx(targets.begin(), targets.end());
  // Pick the target log-probability of each row via transpose+gather.
  Tensor picked = gather_elems(transpose(lsm), col_idx);
  return neg(mean_all(picked));
}

Tensor cosine_distance(const Tensor& u, const Tensor& v) {
  if (u.rows() != 1 || v.rows() != 1 || u.cols() != v.cols())
    throw std::invalid_argument("cosine_distance: expects two 1×d vectors");
  auto sqnorm = [](const Tensor& t) {
    double s = 0.0;
    for (double x : t.values()) s += x * x;
    return s;
  };
  if (sqnorm(u) == 0.0 || sqnorm(v) == 0.0)
    throw std::invalid_argument("cosine_distance: zero-norm vector");
  Tensor dot = sum_all(mul(u, v));
  Tensor nu = sqrt_act(sum_all(mul(u, u)));
  Tensor nv = sqrt_act(sum_all(mul(v, v)));
  return sub(Tensor::scalar(1.0), divide(dot, mul(nu, nv)));
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, double pos_weight) {
  if (logits.cols() != 1 || targets.cols() != 1 || logits.rows() != targets.rows())
    throw std::invalid_argument("bce_with_logits: expects matching n×1 columns");
  // loss_i = -(pos_weight*t*log σ(z) + (1-t)*log(1-σ(z))), in softplus form
  Tensor t = targets;
  Tensor log_sig = neg(softplus(neg(logits)));
  Tensor log_one_minus = neg(softplus(logits));
  Tensor per = neg(add(mul(scale(t, pos_weight), log_sig),
                       mul(sub(Tensor::scalar(1.0), t), log_one_minus)));
  return mean_all(per);
}

}  // namespace av::nn
