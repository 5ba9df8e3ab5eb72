#include "av/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "av/checkpoint.hpp"

namespace av::clf {

using namespace av::nn;

CnnModel CnnModel::init(const CnnConfig& cfg, Rng& rng) {
  CnnModel m;
  m.cfg_ = cfg;
  if (cfg.input == CnnInput::one_hot) {
    if (cfg.vocab_size <= 0) throw std::invalid_argument("cnn: vocab_size required for one-hot input");
    m.proj_ = gaussian_param(cfg.vocab_size, cfg.proj_dim,
                             std::sqrt(1.0 / static_cast<double>(cfg.proj_dim)), rng, "cnn.proj");
  }
  m.block_a_ = ConvMaxBlock::init(cfg.kernel_a, cfg.proj_dim, cfg.conv_w1, cfg.conv_w2, rng, "cnn.blockA");
  m.block_b_ = ConvMaxBlock::init(cfg.kernel_b, cfg.proj_dim, cfg.conv_w1, cfg.conv_w2, rng, "cnn.blockB");
  m.trunk_ = Linear::init(2 * cfg.conv_w2, cfg.trunk_dim, rng, "cnn.trunk");
  if (cfg.bf_branch) {
    if (cfg.bf_dim <= 0) throw std::invalid_argument("cnn: bf_dim required for the BF branch");
    m.bf1_ = Linear::init(cfg.bf_dim, cfg.bf_hidden, rng, "cnn.bf1");
    m.bf2_ = Linear::init(cfg.bf_hidden, cfg.bf_out, rng, "cnn.bf2");
  }
  int64_t hidden = cfg.trunk_dim + (cfg.bf_branch ? cfg.bf_out : 0);
  m.final_ = Linear::init(hidden, 1, rng, "cnn.final");
  return m;
}

std::vector<Tensor> CnnModel::params() const {
  std::vector<Tensor> out;
  if (cfg_.input == CnnInput::one_hot) out.push_back(proj_);
  block_a_.collect(out);
  block_b_.collect(out);
  trunk_.collect(out);
  if (cfg_.bf_branch) {
    bf1_.collect(out);
    bf2_.collect(out);
  }
  final_.collect(out);
  return out;
}

Tensor CnnModel::embed(const CnnExample& ex) const {
  if (cfg_.input == CnnInput::one_hot) {
    if (ex.ids.empty()) throw std::invalid_argument("cnn: example has no token ids");
    return select_rows(proj_, ex.ids);
  }
  if (ex.dense.rows == 0) throw std::invalid_argument("cnn: example has no dense input");
  return Tensor::from(ex.dense);
}

Tensor CnnModel::hidden_tensor(const Tensor& x, const Tensor* bf, bool training,
                               Rng* dropout_rng) const {
  Tensor a = block_a_.forward(x);
  Tensor b = block_b_.forward(x);
  Tensor cat = concat_cols(std::vector<Tensor>{a, b});
  if (training && cfg_.dropout > 0.0) {
    if (!dropout_rng) throw std::invalid_argument("cnn: training forward needs a dropout rng");
    cat = dropout(cat, cfg_.dropout, true, *dropout_rng);
  }
  Tensor t = relu(trunk_.forward(cat));
  if (!cfg_.bf_branch) return t;
  if (!bf) throw std::invalid_argument("cnn: model carries a BF branch but no features given");
  Tensor u = relu(bf2_.forward(relu(bf1_.forward(*bf))));
  return concat_cols(std::vector<Tensor>{t, u});
}

Tensor CnnModel::score(const CnnExample& ex, bool training, Rng* dropout_rng) const {
  Tensor x = embed(ex);
  Tensor bf;
  const Tensor* bfp = nullptr;
  if (cfg_.bf_branch) {
    if (static_cast<int64_t>(ex.bf.size()) != cfg_.bf_dim)
      throw std::invalid_argument("cnn: base-feature size mismatch");
    bf = Tensor::from(1, cfg_.bf_dim, ex.bf);
    bfp = &bf;
  }
  return final_.forward(hidden_tensor(x, bfp, training, dropout_rng));
}

Tensor CnnModel::score_soft_onehot(const Tensor& soft, bool training, Rng* dropout_rng) const {
  if (cfg_.input != CnnInput::one_hot)
    throw std::invalid_argument("cnn: soft one-hot path requires a one-hot model");
  return final_.forward(hidden_tensor(matmul(soft, proj_), nullptr, training, dropout_rng));
}

Tensor CnnModel::score_dense(const Tensor& x, const Tensor* bf, bool training,
                             Rng* dropout_rng) const {
  return final_.forward(hidden_tensor(x, bf, training, dropout_rng));
}

double CnnModel::predict_score(const CnnExample& ex) const {
  NoGrad ng;
  double z = score(ex, false, nullptr).item();
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

std::vector<double> CnnModel::hidden_representation(const CnnExample& ex) const {
  NoGrad ng;
  Tensor x = embed(ex);
  Tensor bf;
  const Tensor* bfp = nullptr;
  if (cfg_.bf_branch) {
    bf = Tensor::from(1, cfg_.bf_dim, ex.bf);
    bfp = &bf;
  }
  return hidden_tensor(x, bfp, false, nullptr).values();
}

void CnnModel::save(const std::string& path, uint64_t seed) const {
  Checkpoint ck;
  ck.seed = seed;
  ck.step = epochs_trained;
  ck.meta["model"] = "cnn";
  ck.meta["input"] = cfg_.input == CnnInput::one_hot ? "one_hot" : "dense";
  ck.meta["vocab_size"] = std::to_string(cfg_.vocab_size);
  ck.meta["proj_dim"] = std::to_string(cfg_.proj_dim);
  ck.meta["kernel_a"] = std::to_string(cfg_.kernel_a);
  ck.meta["kernel_b"] = std::to_string(cfg_.kernel_b);
  ck.meta["conv_w1"] = std::to_string(cfg_.conv_w1);
  ck.meta["conv_w2"] = std::to_string(cfg_.conv_w2);
  ck.meta["trunk_dim"] = std::to_string(cfg_.trunk_dim);
  ck.meta["bf_branch"] = cfg_.bf_branch ? "1" : "0";
  ck.meta["bf_dim"] = std::to_string(cfg_.bf_dim);
  ck.meta["bf_hidden"] = std::to_string(cfg_.bf_hidden);
  ck.meta["bf_out"] = std::to_string(cfg_.bf_out);
  ck.meta["dropout"] = std::to_string(cfg_.dropout);
  for (const auto& p : params()) ck.add(p);
  ck.save(path);
}

CnnModel CnnModel::load(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.meta.at("model") != "cnn") throw std::runtime_error("cnn load: not a cnn checkpoint");
  CnnConfig cfg;
  cfg.input = ck.meta.at("input") == "one_hot" ? CnnInput::one_hot : CnnInput::dense;
  cfg.vocab_size = std::stoll(ck.meta.at("vocab_size"));
  cfg.proj_dim = std::stoll(ck.meta.at("proj_dim"));
  cfg.kernel_a = std::stoi(ck.meta.at("kernel_a"));
  cfg.kernel_b = std::stoi(ck.meta.at("kernel_b"));
  cfg.conv_w1 = std::stoll(ck.meta.at("conv_w1"));
  cfg.conv_w2 = std::stoll(ck.meta.at("conv_w2"));
  cfg.trunk_dim = std::stoll(ck.meta.at("trunk_dim"));
  cfg.bf_branch = ck.meta.at("bf_branch") == "1";
  cfg.bf_dim = std::stoll(ck.meta.at("bf_dim"));
  cfg.bf_hidden = std::stoll(ck.meta.at("bf_hidden"));
  cfg.bf_out = std::stoll(ck.meta.at("bf_out"));
  cfg.dropout = std::stod(ck.meta.at("dropout"));
  Rng rng(1);
  CnnModel m = init(cfg, rng);
  auto ps = m.params();
  ck.restore_into(ps);
  m.epochs_trained = ck.step;
  return m;
}

double compute_pos_weight(std::span<const CnnExample> train) {
  int64_t pos = 0, neg = 0;
  for (const auto& e : train) (e.positive ? pos : neg)++;
  if (pos == 0) return 1.0;
  return static_cast<double>(neg) / static_cast<double>(pos);
}

namespace {

double validation_f1(const CnnModel& m, std::span<const CnnExample> val) {
  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& ex : val) {
    bool pred = m.predict_positive(ex);
    if (pred && ex.positive) ++tp;
    else if (pred && !ex.positive) ++fp;
    else if (!pred && ex.positive) ++fn;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double run_epoch(CnnModel& model, std::span<const CnnExample> data, double pos_weight,
                 const TrainRecipe& recipe, Adam& opt, Rng& shuffle_rng, Rng& dropout_rng) {
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_rng.shuffle(order);
  double loss_sum = 0.0;
  int64_t batches = 0;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(recipe.batch)) {
    size_t end = std::min(order.size(), start + static_cast<size_t>(recipe.batch));
    std::vector<Tensor> scores;
    std::vector<double> targets;
    for (size_t k = start; k < end; ++k) {
      const auto& ex = data[order[k]];
      scores.push_back(model.score(ex, true, &dropout_rng));
      targets.push_back(ex.positive ? 1.0 : 0.0);
    }
    Tensor logit_col = concat_rows(scores);
    Tensor target_col = Tensor::from(static_cast<int64_t>(targets.size()), 1, targets);
    Tensor loss = bce_with_logits(logit_col, target_col, pos_weight);
    opt.zero_grad();
    backward(loss);
    opt.step();
    loss_sum += loss.item();
    ++batches;
  }
  return batches ? loss_sum / static_cast<double>(batches) : 0.0;
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.values());
  return out;
}

void restore(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
  for (size_t i = 0; i < params.size(); ++i) params[i].set_values(snap[i]);
}

}  // namespace

CnnTrainResult cnn_train(std::vector<CnnExample> train, std::vector<CnnExample> validation,
                         const CnnConfig& cfg, const TrainRecipe& recipe, uint64_t seed) {
  if (recipe.min_epochs > recipe.max_epochs)
    throw std::invalid_argument("cnn_train: min_epochs must not exceed max_epochs");
  bool has_pos = false, has_neg = false;
  for (const auto& e : train) (e.positive ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw std::invalid_argument("cnn_train: both classes must be present in training data");
  if (validation.empty()) throw std::invalid_argument("cnn_train: empty validation set");

  CnnTrainResult res;
  Rng init_rng(derive_seed(seed, "cnn-init"));
  res.model = CnnModel::init(cfg, init_rng);
  res.pos_weight = compute_pos_weight(train);

  auto params = res.model.params();
  Adam opt(params, {.lr = recipe.lr, .weight_decay = recipe.weight_decay, .decoupled = true});
  Rng shuffle_rng(derive_seed(seed, "cnn-shuffle"));
  Rng dropout_rng(derive_seed(seed, "cnn-dropout"));

  double best_f1 = -1.0;
  int best_epoch = 0;
  auto best_params = snapshot(params);

  int epoch = 0;
  while (epoch < recipe.max_epochs) {
    ++epoch;
    double loss = run_epoch(res.model, train, res.pos_weight, recipe, opt, shuffle_rng, dropout_rng);
    res.train_loss.push_back(loss);
    double f1 = validation_f1(res.model, validation);
    if (recipe.val_f1_hook) f1 = recipe.val_f1_hook(epoch, f1);
    res.val_f1.push_back(f1);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_epoch = epoch;
      best_params = snapshot(params);
    }
    if (epoch >= recipe.min_epochs &&
        epoch - std::max(best_epoch, recipe.min_epochs) >= recipe.patience)
      break;
  }
  res.stopped_epoch = epoch;
  restore(params, best_params);

  // Short fine-tuning pass on train ∪ validation from the restored model.
  std::vector<CnnExample> merged = std::move(train);
  merged.insert(merged.end(), validation.begin(), validation.end());
  double ft_weight = compute_pos_weight(merged);
  Adam ft_opt(params, {.lr = recipe.lr, .weight_decay = recipe.weight_decay, .decoupled = true});
  for (int e = 0; e < recipe.finetune_epochs; ++e)
    run_epoch(res.model, merged, ft_weight, recipe, ft_opt, shuffle_rng, dropout_rng);

  res.model.epochs_trained = epoch + recipe.finetune_epochs;
  return res;
}

}  // namespace av::clf
