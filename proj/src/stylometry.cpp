#include "av/stylometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace av::style {

namespace {
constexpr const char* kDataDir = AV_DATA_DIR;

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}
}  // namespace

const std::vector<std::string>& tagset() {
  static const std::vector<std::string> tags = {"NOUN", "VERB", "ADJ",  "ADV",
                                                "PRON", "DET",  "ADP",  "NUM",
                                                "CONJ", "PRT",  "PUNCT", "X"};
  return tags;
}

void PosTagger::finish() {
  std::stable_sort(suffixes_.begin(), suffixes_.end(), [](const auto& a, const auto& b) {
    return a.first.size() > b.first.size();
  });
  for (size_t i = 0; i < tagset().size(); ++i) tag_ids_[tagset()[i]] = static_cast<int>(i);
}

PosTagger PosTagger::bundled() {
  return from_files(std::string(kDataDir) + "/pos_lexicon.tsv",
                    std::string(kDataDir) + "/pos_suffix.tsv");
}

PosTagger PosTagger::from_files(const std::string& lexicon_path, const std::string& suffix_path) {
  PosTagger t;
  auto load_pairs = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("pos tagger: cannot open " + path);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw std::runtime_error("pos tagger: malformed line in " + path + ": " + line);
      pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return pairs;
  };
  for (auto& [w, tag] : load_pairs(lexicon_path)) t.lexicon_[w] = tag;
  t.suffixes_ = load_pairs(suffix_path);
  t.finish();
  return t;
}

int PosTagger::tag_index(const std::string& tag) const {
  auto it = tag_ids_.find(tag);
  if (it == tag_ids_.end()) throw std::out_of_range("pos tagger: unknown tag " + tag);
  return it->second;
}

std::vector<std::string> PosTagger::tag(std::span<const corpus::Token> tokens) const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) {
    if (!tok.is_word) {
      out.emplace_back("PUNCT");
      continue;
    }
    const std::string lower = to_lower(tok.surface);
    bool digit_led = !lower.empty() && lower[0] >= '0' && lower[0] <= '9';
    if (digit_led) {
      out.emplace_back("NUM");
      continue;
    }
    auto it = lexicon_.find(lower);
    if (it != lexicon_.end()) {
      out.push_back(it->second);
      continue;
    }
    bool matched = false;
    for (const auto& [suffix, tag] : suffixes_) {
      if (lower.size() > suffix.size() &&
          lower.compare(lower.size() - suffix.size(), suffix.size(), suffix) == 0) {
        out.push_back(tag);
        matched = true;
        break;
      }
    }
    if (!matched) out.emplace_back("NOUN");
  }
  return out;
}

std::vector<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("stopwords: cannot open " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

const std::vector<std::string>& bundled_stopwords() {
  static const std::vector<std::string> words =
      load_stopwords(std::string(kDataDir) + "/stopwords_en.txt");
  return words;
}

int fit_word_length_range(std::span<const corpus::Chunk> training, int min_count, bool* warned) {
  if (training.empty()) throw std::invalid_argument("fit_word_length_range: empty training set");
  std::map<std::string, int64_t> counts;
  size_t longest = 0;
  for (const auto& ch : training) {
    for (const auto& t : ch.tokens) {
      if (!t.is_word) continue;
      ++counts[t.surface];
      longest = std::max(longest, t.surface.size());
    }
  }
  size_t best = 0;
  for (const auto& [w, n] : counts)
    if (n >= min_count) best = std::max(best, w.size());
  if (warned) *warned = false;
  if (best == 0) {
    if (warned) *warned = true;
    std::cerr << "fit_word_length_range: no word reaches frequency " << min_count
              << "; falling back to the longest word length\n";
    best = std::max<size_t>(longest, 1);
  }
  return static_cast<int>(best);
}

BaseFeatureSpec BaseFeatureSpec::fit(std::span<const corpus::Chunk> training,
                                     std::vector<std::string> stopwords, PosTagger tagger,
                                     int min_count) {
  BaseFeatureSpec spec;
  spec.stopwords = std::move(stopwords);
  for (size_t i = 0; i < spec.stopwords.size(); ++i)
    spec.stopword_ids[spec.stopwords[i]] = static_cast<int>(i);
  spec.tagger = std::move(tagger);
  spec.n_max = fit_word_length_range(training, min_count);
  return spec;
}

int BaseFeatureSpec::dim() const {
  return static_cast<int>(stopwords.size()) + n_max + static_cast<int>(tagset().size());
}

std::vector<double> extract_base_features(const corpus::Chunk& chunk,
                                          const BaseFeatureSpec& spec) {
  if (chunk.tokens.empty())
    throw std::invalid_argument("extract_base_features: empty chunk");
  const int n_stop = static_cast<int>(spec.stopwords.size());
  const int n_tags = static_cast<int>(tagset().size());
  std::vector<double> out(static_cast<size_t>(spec.dim()), 0.0);

  double token_count = static_cast<double>(chunk.tokens.size());
  double word_count = static_cast<double>(chunk.word_count());

  for (const auto& t : chunk.tokens) {
    auto it = spec.stopword_ids.find(to_lower(t.surface));
    if (it != spec.stopword_ids.end()) out[static_cast<size_t>(it->second)] += 1.0;
    if (t.is_word) {
      size_t len = t.surface.size();
      if (len >= 1 && len <= static_cast<size_t>(spec.n_max))
        out[static_cast<size_t>(n_stop + static_cast<int>(len) - 1)] += 1.0;
    }
  }
  auto tags = spec.tagger.tag(chunk.tokens);
  for (const auto& tag : tags)
    out[static_cast<size_t>(n_stop + spec.n_max + spec.tagger.tag_index(tag))] += 1.0;

  for (int i = 0; i < n_stop; ++i) out[static_cast<size_t>(i)] /= token_count;
  if (word_count > 0)
    for (int i = 0; i < spec.n_max; ++i) out[static_cast<size_t>(n_stop + i)] /= word_count;
  for (int i = 0; i < n_tags; ++i)
    out[static_cast<size_t>(n_stop + spec.n_max + i)] /= token_count;
  return out;
}

// ---- char n-grams ----

NgramVocab fit_char_ngrams(std::span<const corpus::Chunk> training, int n_lo, int n_hi) {
  NgramVocab v;
  v.n_lo = n_lo;
  v.n_hi = n_hi;
  std::map<std::string, bool> seen;  // ordered: deterministic index layout
  for (const auto& ch : training) {
    std::string text = ch.text();
    for (int n = n_lo; n <= n_hi; ++n)
      for (size_t i = 0; i + static_cast<size_t>(n) <= text.size(); ++i)
        seen[text.substr(i, static_cast<size_t>(n))] = true;
  }
  // Group by length so each order occupies a contiguous block.
  for (int n = n_lo; n <= n_hi; ++n) {
    for (const auto& [gram, _] : seen) {
      if (static_cast<int>(gram.size()) != n) continue;
      v.ids[gram] = static_cast<int>(v.grams.size());
      v.grams.push_back(gram);
    }
  }
  return v;
}

SparseVec char_ngrams(const corpus::Chunk& chunk, const NgramVocab& vocab) {
  SparseVec out;
  out.dim = vocab.dim();
  if (chunk.tokens.empty()) return out;
  std::string text = chunk.text();
  std::map<int, double> counts;
  std::vector<double> totals(static_cast<size_t>(vocab.n_hi + 1), 0.0);
  for (int n = vocab.n_lo; n <= vocab.n_hi; ++n) {
    for (size_t i = 0; i + static_cast<size_t>(n) <= text.size(); ++i) {
      totals[static_cast<size_t>(n)] += 1.0;
      auto it = vocab.ids.find(text.substr(i, static_cast<size_t>(n)));
      if (it != vocab.ids.end()) counts[it->second] += 1.0;
    }
  }
  for (auto& [idx, cnt] : counts) {
    int n = static_cast<int>(vocab.grams[static_cast<size_t>(idx)].size());
    out.items.emplace_back(idx, cnt / totals[static_cast<size_t>(n)]);
  }
  return out;
}

double chi2_presence(int64_t a, int64_t b, int64_t c, int64_t d) {
  double n = static_cast<double>(a + b + c + d);
  double denom = static_cast<double>(a + b) * static_cast<double>(c + d) *
                 static_cast<double>(a + c) * static_cast<double>(b + d);
  if (denom == 0.0) return 0.0;
  double det = static_cast<double>(a) * static_cast<double>(d) -
               static_cast<double>(b) * static_cast<double>(c);
  return n * det * det / denom;
}

std::vector<int> chi2_select(std::span<const SparseVec> features, std::span<const int> labels,
                             double keep_fraction) {
  if (features.size() != labels.size())
    throw std::invalid_argument("chi2_select: one label per document required");
  if (features.empty()) throw std::invalid_argument("chi2_select: empty input");
  int64_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("chi2_select: both classes must be present");

  const int dim = features[0].dim;
  std::vector<int64_t> present_pos(static_cast<size_t>(dim), 0);
  std::vector<int64_t> present_neg(static_cast<size_t>(dim), 0);
  for (size_t i = 0; i < features.size(); ++i) {
    for (const auto& [idx, val] : features[i].items) {
      if (val == 0.0) continue;
      (labels[i] ? present_pos : present_neg)[static_cast<size_t>(idx)]++;
    }
  }

  std::vector<double> scores(static_cast<size_t>(dim));
  for (int f = 0; f < dim; ++f) {
    int64_t a = present_pos[static_cast<size_t>(f)];
    int64_t b = present_neg[static_cast<size_t>(f)];
    scores[static_cast<size_t>(f)] = chi2_presence(a, b, n_pos - a, n_neg - b);
  }

  int keep = static_cast<int>(std::ceil(keep_fraction * dim));
  keep = std::clamp(keep, 0, dim);
  std::vector<int> order(static_cast<size_t>(dim));
  for (int f = 0; f < dim; ++f) order[static_cast<size_t>(f)] = f;
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    if (scores[static_cast<size_t>(x)] != scores[static_cast<size_t>(y)])
      return scores[static_cast<size_t>(x)] > scores[static_cast<size_t>(y)];
    return x < y;
  });
  std::vector<int> selected(order.begin(), order.begin() + keep);
  std::sort(selected.begin(), selected.end());
  return selected;
}

}  // namespace av::style
