#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "av/layers.hpp"
#include "av/optim.hpp"
#include "av/rng.hpp"
#include "av/tensor.hpp"

namespace av::clf {

enum class CnnInput { one_hot, dense };

struct CnnConfig {
  CnnInput input = CnnInput::one_hot;
  int64_t vocab_size = 0;   // one_hot only
  int64_t proj_dim = 128;   // one_hot projection width / dense input dim
  int kernel_a = 3;
  int kernel_b = 5;
  int64_t conv_w1 = 512;
  int64_t conv_w2 = 256;
  int64_t trunk_dim = 64;
  bool bf_branch = false;   // only when plain text is derivable for all inputs
  int64_t bf_dim = 0;
  int64_t bf_hidden = 128;
  int64_t bf_out = 64;
  double dropout = 0.3;
};

// One training/evaluation example. Exactly one of `ids` / `dense` is set;
// `bf` accompanies it when the model carries the base-features branch.
struct CnnExample {
  std::vector<int64_t> ids;
  nn::Mat dense;
  std::vector<double> bf;
  bool positive = false;
};

class CnnModel {
 public:
  CnnModel() = default;
  static CnnModel init(const CnnConfig& cfg, Rng& rng);

  const CnnConfig& config() const { return cfg_; }
  std::vector<nn::Tensor> params() const;

  // Raw confidence score (logit), differentiable.
  nn::Tensor score(const CnnExample& ex, bool training, Rng* dropout_rng) const;
  // Graph-input paths used by adversarial training: a soft one-hot matrix
  // (L×|V|) or a dense embedding sequence (L×proj_dim).
  nn::Tensor score_soft_onehot(const nn::Tensor& soft, bool training, Rng* dropout_rng) const;
  nn::Tensor score_dense(const nn::Tensor& x, const nn::Tensor* bf, bool training,
                         Rng* dropout_rng) const;

  // Probability in (0,1); eval mode, no graph.
  double predict_score(const CnnExample& ex) const;
  bool predict_positive(const CnnExample& ex) const { return predict_score(ex) > 0.5; }

  // Input of the final linear layer (trunk output, plus the BF branch output
  // when present).
  std::vector<double> hidden_representation(const CnnExample& ex) const;

  void save(const std::string& path, uint64_t seed) const;
  static CnnModel load(const std::string& path);

  int64_t epochs_trained = 0;

 private:
  CnnConfig cfg_;
  nn::Tensor proj_;  // |V|×proj_dim, bias-free; one_hot only
  nn::ConvMaxBlock block_a_, block_b_;
  nn::Linear trunk_;
  nn::Linear bf1_, bf2_;
  nn::Linear final_;

  nn::Tensor embed(const CnnExample& ex) const;
  nn::Tensor hidden_tensor(const nn::Tensor& x, const nn::Tensor* bf, bool training,
                           Rng* dropout_rng) const;
};

struct TrainRecipe {
  double lr = 0.001;
  double weight_decay = 0.01;
  int batch = 32;
  int min_epochs = 50;
  int max_epochs = 500;
  int patience = 25;  // epochs without validation-F1 improvement
  int finetune_epochs = 5;
  // Test seam: overrides the computed validation F1 (epoch, computed) -> used.
  std::function<double(int, double)> val_f1_hook;
};

struct CnnTrainResult {
  CnnModel model;
  std::vector<double> train_loss;  // mean per epoch
  std::vector<double> val_f1;      // per epoch
  int stopped_epoch = 0;
  double pos_weight = 1.0;
};

double compute_pos_weight(std::span<const CnnExample> train);

// Weighted BCE training with early stopping on validation F1 (never before
// min_epochs, never past max_epochs), best-checkpoint restore, then a short
// fine-tuning pass on train ∪ validation.
CnnTrainResult cnn_train(std::vector<CnnExample> train, std::vector<CnnExample> validation,
                         const CnnConfig& cfg, const TrainRecipe& recipe, uint64_t seed);

}  // namespace av::clf
