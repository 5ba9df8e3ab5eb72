#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "av/cnn.hpp"
#include "av/corpus.hpp"
#include "av/gan.hpp"
#include "av/generators.hpp"
#include "av/metrics.hpp"
#include "av/svm.hpp"

namespace av::harness {

// Bad flags, bad config keys, invalid combinations: CLI exit code 1.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class ClassifierKind { svm, cnn };
enum class GeneratorKind { gru, tra, ingested };
enum class TrainingKind { lmtr, gantr };

struct ExperimentConfig {
  std::string dataset_path;
  std::string ingested_path;  // generator = ingested
  ClassifierKind classifier = ClassifierKind::cnn;
  GeneratorKind generator = GeneratorKind::gru;
  gen::Encoding encoding = gen::Encoding::one_hot;
  TrainingKind training = TrainingKind::lmtr;
  uint64_t seed = 0;

  // corpus
  int chunk_size = 100;
  int min_tail_words = 25;
  int min_author_chunks = 10;
  int vocab_min_freq = 2;
  corpus::SplitRatios ratios;

  // generator + its training
  gen::GeneratorConfig gen_cfg;
  gen::LmTrainOptions lm;
  gen::SamplingConfig sampling;
  gan::GanConfig gan;
  int augment_factor = 10;
  int augment_cap = 1000;

  // classifiers
  clf::CnnConfig cnn;      // vocab_size / bf fields filled per round
  clf::TrainRecipe recipe;
  double chi2_keep = 0.10;

  // stylometry resources (empty = bundled)
  std::string stopwords_path;
  std::string pos_lexicon_path;
  std::string pos_suffix_path;
};

ExperimentConfig default_config();
// Flat "section.key = value" text; unknown keys are usage errors.
ExperimentConfig load_config(const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& line, int line_no);
void validate(const ExperimentConfig& cfg);
std::string config_canonical(const ExperimentConfig& cfg);
uint64_t config_hash(const ExperimentConfig& cfg);

struct PairedOutcome {
  std::string chunk_id;
  std::string author;
  corpus::Origin origin = corpus::Origin::real;
  bool truth_positive = false;
  bool base_pred = false;
  bool aug_pred = false;
};

struct RoundResult {
  std::string author;
  double baseline_f1 = 0.0, baseline_k = 0.0;
  double aug_f1 = 0.0, aug_k = 0.0;
  std::optional<double> df1_pct, dk_pct;
  double mcnemar_p = 1.0;
  bool significant = false;
  int64_t augment_count = 0;
  std::vector<PairedOutcome> outcomes;  // one per test chunk, id order
  gan::GanTrace gan_trace;              // gantr rounds only
};

struct Report {
  std::vector<RoundResult> rounds;
  double macro_baseline_f1 = 0.0, macro_aug_f1 = 0.0;
  double macro_baseline_k = 0.0, macro_aug_k = 0.0;
  std::optional<double> macro_df1, macro_dk;
};

RoundResult run_round(const corpus::Dataset& dataset, const std::string& author,
                      const ExperimentConfig& cfg);
Report run_experiment(const corpus::Dataset& dataset, const ExperimentConfig& cfg);

void write_report_tsv(const std::string& path, const Report& report);
void write_manifest(const std::string& path, const ExperimentConfig& cfg);

// Hidden-representation export for a trained one-round CNN: TSV with columns
// id, author, split, origin, v_1..v_d over all dataset chunks plus the
// round's augmentation samples.
void export_hidden_tsv(const std::string& path, const corpus::Dataset& dataset,
                       const std::string& author, const ExperimentConfig& cfg,
                       bool augmented_arm);

}  // namespace av::harness
