#include "av/generators.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "av/checkpoint.hpp"

namespace av::gen {

using namespace av::nn;

const char* arch_name(Arch a) { return a == Arch::gru ? "gru" : "tra"; }
const char* encoding_name(Encoding e) { return e == Encoding::one_hot ? "1h" : "emb"; }

EmbeddingTable EmbeddingTable::gaussian(int64_t vocab, int64_t dim, uint64_t seed, double sigma) {
  EmbeddingTable t;
  t.rows = Mat(vocab, dim);
  Rng rng(derive_seed(seed, "embedding-table"));
  for (auto& v : t.rows.v) v = sigma * rng.normal();
  return t;
}

Mat EmbeddingTable::embed(std::span<const int64_t> ids) const {
  Mat out(static_cast<int64_t>(ids.size()), rows.cols);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= rows.rows)
      throw std::out_of_range("EmbeddingTable::embed: id out of range");
    std::copy(rows.v.begin() + ids[i] * rows.cols, rows.v.begin() + (ids[i] + 1) * rows.cols,
              out.v.begin() + static_cast<int64_t>(i) * rows.cols);
  }
  return out;
}

GeneratorModel GeneratorModel::init(const GeneratorConfig& cfg, corpus::Vocabulary vocab,
                                    uint64_t seed) {
  GeneratorModel m;
  m.cfg_ = cfg;
  m.vocab_ = std::move(vocab);
  Rng rng(derive_seed(seed, "generator-init"));
  int64_t V = m.vocab_.size();
  int64_t input_dim = cfg.encoding == Encoding::one_hot ? cfg.proj_dim : cfg.emb_dim;
  if (cfg.encoding == Encoding::one_hot)
    m.in_proj_ = gaussian_param(V, cfg.proj_dim, std::sqrt(1.0 / static_cast<double>(cfg.proj_dim)),
                                rng, "gen.in_proj");
  int64_t trunk_out;
  if (cfg.arch == Arch::gru) {
    m.gru_ = GruStack::init(input_dim, cfg.hidden, cfg.layers, rng, "gen.gru");
    trunk_out = cfg.hidden;
  } else {
    TransformerConfig tc;
    tc.d_model = input_dim;
    tc.heads = cfg.heads;
    tc.ffn_dim = cfg.hidden;
    tc.layers = cfg.layers;
    tc.causal = true;
    m.tra_ = TransformerEncoder::init(tc, rng, "gen.tra");
    trunk_out = input_dim;
  }
  m.mid_ = Linear::init(trunk_out, cfg.mid_dim, rng, "gen.mid");
  int64_t head_out = cfg.encoding == Encoding::one_hot ? V : cfg.emb_dim;
  m.head_ = Linear::init(cfg.mid_dim, head_out, rng, "gen.head");
  return m;
}

std::vector<Tensor> GeneratorModel::params() const {
  std::vector<Tensor> out;
  if (cfg_.encoding == Encoding::one_hot) out.push_back(in_proj_);
  if (cfg_.arch == Arch::gru) gru_.collect(out);
  else tra_.collect(out);
  mid_.collect(out);
  head_.collect(out);
  return out;
}

Tensor GeneratorModel::embed_ids(std::span<const int64_t> ids) const {
  if (cfg_.encoding != Encoding::one_hot)
    throw std::logic_error("generator: embed_ids is a one-hot-mode operation");
  return select_rows(in_proj_, std::vector<int64_t>(ids.begin(), ids.end()));
}

Tensor GeneratorModel::forward_rows(const Tensor& inputs) const {
  Tensor h = cfg_.arch == Arch::gru ? gru_.forward_sequence(inputs) : tra_.forward(inputs);
  return head_.forward(relu(mid_.forward(h)));
}

GeneratorModel::StepState GeneratorModel::fresh_state() const {
  StepState s;
  if (cfg_.arch == Arch::gru) s.gru = gru_.initial_state();
  return s;
}

Tensor GeneratorModel::step(const Tensor& input_row, StepState& state) const {
  if (cfg_.arch == Arch::gru) {
    Tensor h = gru_.step(input_row, state.gru);
    return head_.forward(relu(mid_.forward(h)));
  }
  throw std::logic_error("generator: step() is only incremental for the GRU architecture");
}

// ---- LM training ----

namespace {

struct ChunkIds {
  std::vector<int64_t> ids;
};

std::vector<ChunkIds> encode_chunks(const corpus::Vocabulary& vocab,
                                    std::span<const corpus::Chunk> chunks) {
  std::vector<ChunkIds> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) {
    ChunkIds ci;
    ci.ids.reserve(c.tokens.size());
    for (const auto& t : c.tokens) ci.ids.push_back(vocab.encode(t.surface));
    out.push_back(std::move(ci));
  }
  return out;
}

int64_t window_count(std::span<const ChunkIds> chunks, int min_prefix) {
  int64_t n = 0;
  for (const auto& c : chunks)
    n += std::max<int64_t>(0, static_cast<int64_t>(c.ids.size()) - min_prefix);
  return n;
}

}  // namespace

LmTrainResult lm_train(GeneratorModel& model, std::span<const corpus::Chunk> author_chunks,
                       const LmTrainOptions& opt, uint64_t seed) {
  if (model.config().encoding != Encoding::one_hot)
    throw std::invalid_argument("lm_train: model must use the one-hot encoding");
  if (author_chunks.empty()) throw std::invalid_argument("lm_train: empty author corpus");
  const int min_prefix = model.config().min_prefix;
  auto encoded = encode_chunks(model.vocab(), author_chunks);

  LmTrainResult res;
  res.windows_per_epoch = window_count(encoded, min_prefix);
  if (res.windows_per_epoch == 0)
    throw std::invalid_argument("lm_train: no chunk is longer than the prompt prefix");

  auto params = model.params();
  Adam optzr(params, {.lr = opt.lr, .weight_decay = opt.weight_decay, .decoupled = true});
  Rng shuffle_rng(derive_seed(seed, "lm-shuffle"));

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<size_t> order(encoded.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t pairs = 0;
    for (size_t idx : order) {
      const auto& ids = encoded[idx].ids;
      int64_t L = static_cast<int64_t>(ids.size());
      if (L <= min_prefix) continue;
      // One pass over the sequence scores every prefix; row t predicts
      // token t+1, so rows [min_prefix-1, L-2] carry the training pairs.
      Tensor inputs = model.embed_ids(std::span<const int64_t>(ids.data(), static_cast<size_t>(L - 1)));
      Tensor rows = model.forward_rows(inputs);
      Tensor preds = slice_rows(rows, min_prefix - 1, L - 1);
      std::vector<int64_t> targets(ids.begin() + min_prefix, ids.end());
      Tensor loss = cross_entropy_loss(preds, targets);
      optzr.zero_grad();
      backward(loss);
      optzr.step();
      loss_sum += loss.item() * static_cast<double>(targets.size());
      pairs += static_cast<int64_t>(targets.size());
    }
    res.epoch_loss.push_back(loss_sum / static_cast<double>(pairs));
  }
  return res;
}

LmTrainResult lm_train_emb(GeneratorModel& model, std::span<const corpus::Chunk> author_chunks,
                           const EmbeddingTable& table, const LmTrainOptions& opt, uint64_t seed) {
  if (model.config().encoding != Encoding::emb)
    throw std::invalid_argument("lm_train_emb: model must use the emb encoding");
  if (author_chunks.empty()) throw std::invalid_argument("lm_train_emb: empty author corpus");
  const int min_prefix = model.config().min_prefix;
  auto encoded = encode_chunks(model.vocab(), author_chunks);

  // Frozen targets; zero-norm rows cannot define a cosine loss.
  for (const auto& c : encoded)
    for (int64_t id : c.ids) {
      double sq = 0.0;
      for (int64_t j = 0; j < table.rows.cols; ++j) {
        double v = table.rows.at(id, j);
        sq += v * v;
      }
      if (sq == 0.0) throw std::invalid_argument("lm_train_emb: zero-norm embedding target");
    }

  LmTrainResult res;
  res.windows_per_epoch = window_count(encoded, min_prefix);
  if (res.windows_per_epoch == 0)
    throw std::invalid_argument("lm_train_emb: no chunk is longer than the prompt prefix");

  auto params = model.params();
  Adam optzr(params, {.lr = opt.lr, .weight_decay = opt.weight_decay, .decoupled = true});
  Rng shuffle_rng(derive_seed(seed, "lm-emb-shuffle"));

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<size_t> order(encoded.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t pairs = 0;
    for (size_t idx : order) {
      const auto& ids = encoded[idx].ids;
      int64_t L = static_cast<int64_t>(ids.size());
      if (L <= min_prefix) continue;
      std::vector<int64_t> input_ids(ids.begin(), ids.end() - 1);
      Tensor inputs = Tensor::from(table.embed(input_ids));
      Tensor rows = model.forward_rows(inputs);
      Tensor preds = slice_rows(rows, min_prefix - 1, L - 1);
      std::vector<int64_t> target_ids(ids.begin() + min_prefix, ids.end());
      Tensor targets = Tensor::from(table.embed(target_ids));
      // Row-wise cosine distance, averaged.
      Tensor dots = row_sum(mul(preds, targets));
      Tensor nu = sqrt_act(row_sum(mul(preds, preds)));
      Tensor nv = sqrt_act(row_sum(mul(targets, targets)));
      Tensor cos = divide(dots, mul(nu, nv));
      Tensor loss = mean_all(sub(Tensor::scalar(1.0), cos));
      optzr.zero_grad();
      backward(loss);
      optzr.step();
      loss_sum += loss.item() * static_cast<double>(target_ids.size());
      pairs += static_cast<int64_t>(target_ids.size());
    }
    res.epoch_loss.push_back(loss_sum / static_cast<double>(pairs));
  }
  return res;
}

// ---- sampling ----

std::vector<std::pair<int, double>> topk_filter(std::span<const double> logits, int k,
                                                double temperature) {
  if (k < 1) throw std::invalid_argument("topk_filter: k must be >= 1");
  int n = static_cast<int>(logits.size());
  k = std::min(k, n);
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (logits[static_cast<size_t>(a)] != logits[static_cast<size_t>(b)])
      return logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(b)];
    return a < b;
  });
  order.resize(static_cast<size_t>(k));
  double mx = -std::numeric_limits<double>::infinity();
  for (int i : order) mx = std::max(mx, logits[static_cast<size_t>(i)]);
  double total = 0.0;
  std::vector<std::pair<int, double>> out;
  out.reserve(static_cast<size_t>(k));
  for (int i : order) {
    double w = std::exp((logits[static_cast<size_t>(i)] - mx) / temperature);
    out.emplace_back(i, w);
    total += w;
  }
  for (auto& [i, w] : out) w /= total;
  return out;
}

namespace {

struct NgramBlocker {
  int n = 0;
  std::set<std::vector<int64_t>> seen;
  std::vector<int64_t> history;

  explicit NgramBlocker(int block_n) : n(block_n) {}

  void push(int64_t tok) {
    history.push_back(tok);
    if (n > 0 && static_cast<int>(history.size()) >= n)
      seen.insert(std::vector<int64_t>(history.end() - n, history.end()));
  }

  bool banned(int64_t tok) const {
    if (n <= 0 || static_cast<int>(history.size()) < n - 1) return false;
    std::vector<int64_t> cand(history.end() - (n - 1), history.end());
    cand.push_back(tok);
    return seen.count(cand) > 0;
  }
};

int64_t sample_next(std::span<const double> logits, const NgramBlocker& blocker,
                    const SamplingConfig& cfg, Rng& rng) {
  int n = static_cast<int>(logits.size());
  std::vector<int> allowed;
  allowed.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    if (!blocker.banned(i)) allowed.push_back(i);
  if (allowed.empty())
    throw std::runtime_error("generate: n-gram blocking exhausted the vocabulary");

  std::vector<double> sub(allowed.size());
  for (size_t i = 0; i < allowed.size(); ++i) sub[i] = logits[static_cast<size_t>(allowed[i])];

  switch (cfg.strategy) {
    case SamplingConfig::Strategy::argmax: {
      size_t best = 0;
      for (size_t i = 1; i < sub.size(); ++i)
        if (sub[i] > sub[best]) best = i;
      return allowed[best];
    }
    case SamplingConfig::Strategy::topk: {
      auto filtered = topk_filter(sub, cfg.k, cfg.temperature);
      std::vector<double> probs(filtered.size());
      for (size_t i = 0; i < filtered.size(); ++i) probs[i] = filtered[i].second;
      return allowed[static_cast<size_t>(filtered[rng.categorical(probs)].first)];
    }
    case SamplingConfig::Strategy::categorical: {
      double mx = *std::max_element(sub.begin(), sub.end());
      std::vector<double> probs(sub.size());
      for (size_t i = 0; i < sub.size(); ++i)
        probs[i] = std::exp((sub[i] - mx) / cfg.temperature);
      return allowed[rng.categorical(probs)];
    }
  }
  throw std::logic_error("sample_next: unreachable");
}

std::vector<int64_t> encode_prompt(const corpus::Vocabulary& vocab,
                                   std::span<const corpus::Token> prompt) {
  std::vector<int64_t> ids;
  ids.reserve(prompt.size());
  bool warned = false;
  for (const auto& t : prompt) {
    int id = vocab.encode(t.surface);
    if (id == vocab.unk_id && t.surface != corpus::Vocabulary::unk_surface() && !warned) {
      std::cerr << "generate: prompt token '" << t.surface << "' not in vocabulary; using UNK\n";
      warned = true;
    }
    ids.push_back(id);
  }
  return ids;
}

}  // namespace

std::vector<int64_t> generate_tokens(const GeneratorModel& model,
                                     std::span<const corpus::Token> prompt, int64_t length,
                                     const SamplingConfig& cfg) {
  if (model.config().encoding != Encoding::one_hot)
    throw std::invalid_argument("generate_tokens: model must use the one-hot encoding");
  if (length < static_cast<int64_t>(prompt.size()))
    throw std::invalid_argument("generate_tokens: length shorter than the prompt");
  NoGrad ng;
  Rng rng(derive_seed(cfg.seed, "generate"));
  std::vector<int64_t> ids = encode_prompt(model.vocab(), prompt);
  NgramBlocker blocker(cfg.block_ngram);
  for (int64_t t : ids) blocker.push(t);

  const bool incremental = model.config().arch == Arch::gru;
  GeneratorModel::StepState state = model.fresh_state();
  Tensor last_out;
  if (incremental) {
    for (int64_t id : ids) {
      Tensor x = model.embed_ids(std::span<const int64_t>(&id, 1));
      last_out = model.step(x, state);
    }
  }

  while (static_cast<int64_t>(ids.size()) < length) {
    Tensor logits;
    if (incremental) {
      logits = last_out;
    } else {
      Tensor rows = model.forward_rows(model.embed_ids(ids));
      logits = slice_rows(rows, rows.rows() - 1, rows.rows());
    }
    int64_t next = sample_next(logits.values(), blocker, cfg, rng);
    ids.push_back(next);
    blocker.push(next);
    if (incremental && static_cast<int64_t>(ids.size()) < length) {
      Tensor x = model.embed_ids(std::span<const int64_t>(&next, 1));
      last_out = model.step(x, state);
    }
  }
  return ids;
}

Mat generate_dense(const GeneratorModel& model, const EmbeddingTable& table,
                   std::span<const corpus::Token> prompt, int64_t length) {
  if (model.config().encoding != Encoding::emb)
    throw std::invalid_argument("generate_dense: model must use the emb encoding");
  if (length < static_cast<int64_t>(prompt.size()))
    throw std::invalid_argument("generate_dense: length shorter than the prompt");
  NoGrad ng;
  std::vector<int64_t> prompt_ids = encode_prompt(model.vocab(), prompt);
  Mat out(length, model.config().emb_dim);
  Mat prompt_rows = table.embed(prompt_ids);
  std::copy(prompt_rows.v.begin(), prompt_rows.v.end(), out.v.begin());

  const bool incremental = model.config().arch == Arch::gru;
  GeneratorModel::StepState state = model.fresh_state();
  Tensor last_out;
  auto row_tensor = [&](int64_t r) {
    std::vector<double> v(out.v.begin() + r * out.cols, out.v.begin() + (r + 1) * out.cols);
    return Tensor::from(1, out.cols, std::move(v));
  };
  if (incremental)
    for (int64_t r = 0; r < static_cast<int64_t>(prompt_ids.size()); ++r)
      last_out = model.step(row_tensor(r), state);

  for (int64_t pos = static_cast<int64_t>(prompt_ids.size()); pos < length; ++pos) {
    Tensor next;
    if (incremental) {
      next = last_out;
    } else {
      std::vector<double> hist(out.v.begin(), out.v.begin() + pos * out.cols);
      Tensor rows = model.forward_rows(Tensor::from(pos, out.cols, std::move(hist)));
      next = slice_rows(rows, pos - 1, pos);
    }
    std::copy(next.values().begin(), next.values().end(), out.v.begin() + pos * out.cols);
    if (incremental && pos + 1 < length) last_out = model.step(row_tensor(pos), state);
  }
  return out;
}

// ---- augmentation ----

std::vector<AugmentPlanEntry> augment_plan(const corpus::Dataset& dataset,
                                           const std::string& author, uint64_t seed,
                                           int factor, int cap, int prompt_len) {
  auto chunks = dataset.author_chunks(author, corpus::Split::train);
  if (chunks.empty())
    throw std::invalid_argument("augment: author '" + author + "' has no training chunks");
  int64_t n = std::min<int64_t>(static_cast<int64_t>(factor) * static_cast<int64_t>(chunks.size()),
                                static_cast<int64_t>(cap));
  Rng rng(derive_seed(seed, "augment:" + author));
  std::vector<AugmentPlanEntry> plan;
  plan.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    AugmentPlanEntry e;
    e.source_index = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(chunks.size())));
    const auto& src = *chunks[e.source_index];
    size_t plen = std::min<size_t>(static_cast<size_t>(prompt_len), src.tokens.size());
    e.prompt.assign(src.tokens.begin(), src.tokens.begin() + static_cast<ptrdiff_t>(plen));
    e.length = static_cast<int64_t>(src.tokens.size());
    plan.push_back(std::move(e));
  }
  return plan;
}

std::vector<corpus::Chunk> augment(const corpus::Dataset& dataset, const std::string& author,
                                   const GeneratorModel& model, const SamplingConfig& cfg,
                                   uint64_t seed, int factor, int cap) {
  auto plan = augment_plan(dataset, author, seed, factor, cap, model.config().min_prefix);
  std::vector<corpus::Chunk> out;
  out.reserve(plan.size());
  for (size_t i = 0; i < plan.size(); ++i) {
    SamplingConfig per = cfg;
    per.seed = derive_seed(seed, "augment-sample:" + author + ":" + std::to_string(i));
    auto ids = generate_tokens(model, plan[i].prompt, plan[i].length, per);
    corpus::Chunk c;
    c.id = "gen-" + author + "-" + std::to_string(i);
    c.author = author;
    c.origin = corpus::Origin::generated;
    c.split = corpus::Split::train;
    c.tokens.reserve(ids.size());
    for (int64_t id : ids) {
      const std::string& surf = model.vocab().decode(static_cast<int>(id));
      corpus::Token t;
      t.surface = surf;
      auto toks = corpus::tokenize(surf);
      t.is_word = !toks.empty() && toks.front().is_word;
      c.tokens.push_back(std::move(t));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Mat> augment_dense(const corpus::Dataset& dataset, const std::string& author,
                               const GeneratorModel& model, const EmbeddingTable& table,
                               uint64_t seed, int factor, int cap) {
  auto plan = augment_plan(dataset, author, seed, factor, cap, model.config().min_prefix);
  std::vector<Mat> out;
  out.reserve(plan.size());
  for (const auto& e : plan)
    out.push_back(generate_dense(model, table, e.prompt, e.length));
  return out;
}

// ---- persistence ----

void GeneratorModel::save(const std::string& path, uint64_t seed) const {
  Checkpoint ck;
  ck.seed = seed;
  ck.meta["model"] = "generator";
  ck.meta["arch"] = arch_name(cfg_.arch);
  ck.meta["encoding"] = encoding_name(cfg_.encoding);
  ck.meta["proj_dim"] = std::to_string(cfg_.proj_dim);
  ck.meta["hidden"] = std::to_string(cfg_.hidden);
  ck.meta["layers"] = std::to_string(cfg_.layers);
  ck.meta["heads"] = std::to_string(cfg_.heads);
  ck.meta["mid_dim"] = std::to_string(cfg_.mid_dim);
  ck.meta["emb_dim"] = std::to_string(cfg_.emb_dim);
  ck.meta["min_prefix"] = std::to_string(cfg_.min_prefix);
  {
    std::ostringstream vs, fs;
    for (int i = 0; i < vocab_.size(); ++i) {
      if (i) {
        vs << ' ';
        fs << ' ';
      }
      vs << vocab_.surfaces[static_cast<size_t>(i)];
      fs << vocab_.freq[static_cast<size_t>(i)];
    }
    ck.meta["vocab"] = vs.str();
    ck.meta["vocab_freq"] = fs.str();
  }
  for (const auto& p : params()) ck.add(p);
  ck.save(path);
}

GeneratorModel GeneratorModel::load(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.meta.at("model") != "generator")
    throw std::runtime_error("generator load: not a generator checkpoint");
  GeneratorConfig cfg;
  cfg.arch = ck.meta.at("arch") == "gru" ? Arch::gru : Arch::tra;
  cfg.encoding = ck.meta.at("encoding") == "1h" ? Encoding::one_hot : Encoding::emb;
  cfg.proj_dim = std::stoll(ck.meta.at("proj_dim"));
  cfg.hidden = std::stoll(ck.meta.at("hidden"));
  cfg.layers = std::stoi(ck.meta.at("layers"));
  cfg.heads = std::stoi(ck.meta.at("heads"));
  cfg.mid_dim = std::stoll(ck.meta.at("mid_dim"));
  cfg.emb_dim = std::stoll(ck.meta.at("emb_dim"));
  cfg.min_prefix = std::stoi(ck.meta.at("min_prefix"));

  corpus::Vocabulary vocab;
  {
    std::istringstream vs(ck.meta.at("vocab")), fs(ck.meta.at("vocab_freq"));
    std::string tok;
    int64_t freq;
    while (vs >> tok && fs >> freq) {
      vocab.ids[tok] = static_cast<int>(vocab.surfaces.size());
      vocab.surfaces.push_back(tok);
      vocab.freq.push_back(freq);
    }
    vocab.unk_id = vocab.size() - 1;
  }
  GeneratorModel m = init(cfg, std::move(vocab), ck.seed);
  auto ps = m.params();
  ck.restore_into(ps);
  return m;
}

}  // namespace av::gen
