#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "av/corpus.hpp"

namespace av::style {

// 12-tag universal-style tagset.
const std::vector<std::string>& tagset();

// Lexicon lookup first, then longest-suffix rules, else NOUN. Punctuation
// tokens map to PUNCT and digit-led tokens to NUM before the lexicon.
class PosTagger {
 public:
  static PosTagger bundled();
  static PosTagger from_files(const std::string& lexicon_path, const std::string& suffix_path);

  std::vector<std::string> tag(std::span<const corpus::Token> tokens) const;
  int tag_index(const std::string& tag) const;

 private:
  std::unordered_map<std::string, std::string> lexicon_;
  std::vector<std::pair<std::string, std::string>> suffixes_;  // longest first
  std::unordered_map<std::string, int> tag_ids_;

  void finish();
};

std::vector<std::string> load_stopwords(const std::string& path);
const std::vector<std::string>& bundled_stopwords();

// Longest word length among words occurring at least `min_count` times in
// the training chunks. Falls back to the longest word overall (setting
// *warned) when nothing reaches the threshold.
int fit_word_length_range(std::span<const corpus::Chunk> training, int min_count = 5,
                          bool* warned = nullptr);

struct BaseFeatureSpec {
  std::vector<std::string> stopwords;  // index order defines the block layout
  std::unordered_map<std::string, int> stopword_ids;
  int n_max = 1;
  PosTagger tagger;

  static BaseFeatureSpec fit(std::span<const corpus::Chunk> training,
                             std::vector<std::string> stopwords, PosTagger tagger,
                             int min_count = 5);
  int dim() const;
};

// Function-word and POS frequencies over token count; word-length
// frequencies over word count. Blocks are concatenated in that order.
std::vector<double> extract_base_features(const corpus::Chunk& chunk,
                                          const BaseFeatureSpec& spec);

// ---- character n-grams ----

struct SparseVec {
  std::vector<std::pair<int, double>> items;  // ascending index
  int dim = 0;
};

struct NgramVocab {
  int n_lo = 1, n_hi = 3;
  std::vector<std::string> grams;              // index -> gram, grouped by n
  std::unordered_map<std::string, int> ids;
  int dim() const { return static_cast<int>(grams.size()); }
};

NgramVocab fit_char_ngrams(std::span<const corpus::Chunk> training, int n_lo = 1, int n_hi = 3);

// Counts per fitted gram over the detokenized chunk text, normalized by the
// total n-gram count of the same order.
SparseVec char_ngrams(const corpus::Chunk& chunk, const NgramVocab& vocab);

// χ² on the 2×2 presence/class table.
double chi2_presence(int64_t a, int64_t b, int64_t c, int64_t d);

// Top ceil(keep_fraction * dim) features by presence-χ², ties broken by
// lower index; result sorted ascending. Throws unless both classes appear.
std::vector<int> chi2_select(std::span<const SparseVec> features, std::span<const int> labels,
                             double keep_fraction = 0.10);

}  // namespace av::style
