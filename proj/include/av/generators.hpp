#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "av/corpus.hpp"
#include "av/layers.hpp"
#include "av/optim.hpp"
#include "av/rng.hpp"
#include "av/tensor.hpp"

namespace av::gen {

enum class Arch { gru, tra };
enum class Encoding { one_hot, emb };

const char* arch_name(Arch a);
const char* encoding_name(Encoding e);

struct GeneratorConfig {
  Arch arch = Arch::gru;
  Encoding encoding = Encoding::one_hot;
  int64_t proj_dim = 128;   // one-hot input projection; transformer d_model
  int64_t hidden = 512;     // GRU hidden width; transformer feed-forward width
  int layers = 2;
  int heads = 4;            // transformer only
  int64_t mid_dim = 128;    // linear+ReLU stage before the output head
  int64_t emb_dim = 128;    // emb-mode output dimension
  int min_prefix = 5;       // shortest prefix that trains/prompts a prediction
};

// Shared dense vocabulary table: emb-mode training target and the dense
// input representation of real text.
struct EmbeddingTable {
  nn::Mat rows;  // |V|×dim
  static EmbeddingTable gaussian(int64_t vocab, int64_t dim, uint64_t seed, double sigma = 0.02);
  nn::Mat embed(std::span<const int64_t> ids) const;
};

class GeneratorModel {
 public:
  GeneratorModel() = default;
  static GeneratorModel init(const GeneratorConfig& cfg, corpus::Vocabulary vocab, uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  const corpus::Vocabulary& vocab() const { return vocab_; }
  std::vector<nn::Tensor> params() const;

  // Output rows (one per input position) given already-embedded inputs; each
  // row sees only its prefix. One-hot models map to |V| logits, emb models to
  // emb_dim coordinates.
  nn::Tensor forward_rows(const nn::Tensor& inputs) const;
  // One-hot path: embeds token ids through the input projection.
  nn::Tensor embed_ids(std::span<const int64_t> ids) const;
  // The |V|×proj_dim projection itself (one-hot mode), for soft inputs.
  const nn::Tensor& input_projection() const { return in_proj_; }

  // Stateful single-step interface for incremental (GRU) generation.
  struct StepState {
    std::vector<nn::Tensor> gru;
    std::vector<int64_t> consumed;  // full history, used by the transformer
  };
  StepState fresh_state() const;
  // Returns the output row after consuming one more embedded input row.
  nn::Tensor step(const nn::Tensor& input_row, StepState& state) const;

  void save(const std::string& path, uint64_t seed) const;
  static GeneratorModel load(const std::string& path);

 private:
  GeneratorConfig cfg_;
  corpus::Vocabulary vocab_;
  nn::Tensor in_proj_;  // |V|×proj_dim, bias-free (one-hot mode)
  nn::GruStack gru_;
  nn::TransformerEncoder tra_;
  nn::Linear mid_;
  nn::Linear head_;

  friend struct GeneratorAccess;
};

struct LmTrainOptions {
  int epochs = 300;
  double lr = 0.001;
  double weight_decay = 0.01;
};

struct LmTrainResult {
  std::vector<double> epoch_loss;   // mean per epoch
  int64_t windows_per_epoch = 0;    // prefix→next-token training pairs
};

// Next-token cross-entropy over every prefix of length >= min_prefix.
LmTrainResult lm_train(GeneratorModel& model, std::span<const corpus::Chunk> author_chunks,
                       const LmTrainOptions& opt, uint64_t seed);

// Cosine-distance training against frozen embedding-table targets.
LmTrainResult lm_train_emb(GeneratorModel& model, std::span<const corpus::Chunk> author_chunks,
                           const EmbeddingTable& table, const LmTrainOptions& opt, uint64_t seed);

struct SamplingConfig {
  enum class Strategy { topk, categorical, argmax };
  Strategy strategy = Strategy::categorical;
  int k = 50;
  int block_ngram = 5;  // 0 disables the no-repeat constraint
  double temperature = 1.0;
  uint64_t seed = 0;
};

// Renormalized distribution over the k highest logits (ties to lower index):
// (index, probability) pairs summing to 1.
std::vector<std::pair<int, double>> topk_filter(std::span<const double> logits, int k,
                                                double temperature);

// Autoregressive continuation of a tokenized prompt to exactly `length`
// tokens (prompt included). Out-of-vocabulary prompt tokens map to UNK with
// a warning.
std::vector<int64_t> generate_tokens(const GeneratorModel& model,
                                     std::span<const corpus::Token> prompt, int64_t length,
                                     const SamplingConfig& cfg);

// Dense continuation: first rows are the embedded prompt, then raw generator
// outputs fed back as inputs.
nn::Mat generate_dense(const GeneratorModel& model, const EmbeddingTable& table,
                       std::span<const corpus::Token> prompt, int64_t length);

struct AugmentPlanEntry {
  size_t source_index = 0;          // into the author's training chunks
  std::vector<corpus::Token> prompt;
  int64_t length = 0;
};

// n = min(factor * |author training chunks|, cap) prompts drawn with
// replacement from the author's training chunks.
std::vector<AugmentPlanEntry> augment_plan(const corpus::Dataset& dataset,
                                           const std::string& author, uint64_t seed,
                                           int factor = 10, int cap = 1000,
                                           int prompt_len = 5);

std::vector<corpus::Chunk> augment(const corpus::Dataset& dataset, const std::string& author,
                                   const GeneratorModel& model, const SamplingConfig& cfg,
                                   uint64_t seed, int factor = 10, int cap = 1000);

std::vector<nn::Mat> augment_dense(const corpus::Dataset& dataset, const std::string& author,
                                   const GeneratorModel& model, const EmbeddingTable& table,
                                   uint64_t seed, int factor = 10, int cap = 1000);

}  // namespace av::gen
