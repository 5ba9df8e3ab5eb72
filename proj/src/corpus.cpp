#include "av/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "av/rng.hpp"
#include "json.hpp"

namespace av::corpus {

namespace {

// --- minimal UTF-8 handling -------------------------------------------------

struct Codepoint {
  uint32_t cp = 0;
  int len = 1;
};

Codepoint decode_utf8(std::string_view s, size_t i) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  Codepoint out;
  if (c < 0x80) {
    out.cp = c;
    out.len = 1;
  } else if ((c >> 5) == 0x6 && i + 1 < s.size()) {
    out.cp = ((c & 0x1f) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3f);
    out.len = 2;
  } else if ((c >> 4) == 0xe && i + 2 < s.size()) {
    out.cp = ((c & 0x0f) << 12) | ((static_cast<unsigned char>(s[i + 1]) & 0x3f) << 6) |
             (static_cast<unsigned char>(s[i + 2]) & 0x3f);
    out.len = 3;
  } else if ((c >> 3) == 0x1e && i + 3 < s.size()) {
    out.cp = ((c & 0x07) << 18) | ((static_cast<unsigned char>(s[i + 1]) & 0x3f) << 12) |
             ((static_cast<unsigned char>(s[i + 2]) & 0x3f) << 6) |
             (static_cast<unsigned char>(s[i + 3]) & 0x3f);
    out.len = 4;
  } else {
    out.cp = c;  // lone continuation byte; treat as opaque symbol
    out.len = 1;
  }
  return out;
}

bool is_word_cp(uint32_t cp) {
  if ((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9'))
    return true;
  if (cp < 0x80) return false;  // remaining ASCII is punctuation/symbols
  // Common non-ASCII punctuation ranges; everything else above ASCII counts
  // as a word character (letters with diacritics, non-Latin scripts, ...).
  if (cp >= 0xA1 && cp <= 0xBF) return false;    // Latin-1 punctuation block
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
  if (cp >= 0x2E00 && cp <= 0x2E7F) return false;  // supplemental punctuation
  return true;
}

std::vector<Codepoint> codepoints(std::string_view piece) {
  std::vector<Codepoint> cps;
  size_t i = 0;
  while (i < piece.size()) {
    Codepoint cp = decode_utf8(piece, i);
    cps.push_back(cp);
    i += static_cast<size_t>(cp.len);
  }
  return cps;
}

bool contains_word_char(std::string_view s) {
  for (const auto& cp : codepoints(s))
    if (is_word_cp(cp.cp)) return true;
  return false;
}

}  // namespace

const char* origin_name(Origin o) {
  switch (o) {
    case Origin::real: return "real";
    case Origin::generated: return "generated";
    case Origin::ingested: return "ingested";
  }
  return "?";
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

int64_t Chunk::word_count() const {
  int64_t n = 0;
  for (const auto& t : tokens)
    if (t.is_word) ++n;
  return n;
}

std::string Chunk::text() const { return detokenize(tokens); }

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  size_t i = 0;
  const size_t n = text.size();
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (i < n) {
    while (i < n && is_space(text[i])) ++i;
    size_t start = i;
    while (i < n && !is_space(text[i])) ++i;
    if (i == start) break;
    std::string_view piece = text.substr(start, i - start);

    auto cps = codepoints(piece);
    size_t lo = 0, hi = cps.size();
    // byte offsets per codepoint
    std::vector<size_t> off(cps.size() + 1, 0);
    for (size_t k = 0; k < cps.size(); ++k) off[k + 1] = off[k] + static_cast<size_t>(cps[k].len);

    // leading punctuation, one character per token
    std::vector<Token> tail;
    while (lo < hi && !is_word_cp(cps[lo].cp)) {
      out.push_back({std::string(piece.substr(off[lo], static_cast<size_t>(cps[lo].len))), false});
      ++lo;
    }
    // trailing punctuation (collected, then appended in order)
    while (hi > lo && !is_word_cp(cps[hi - 1].cp)) {
      tail.push_back({std::string(piece.substr(off[hi - 1], static_cast<size_t>(cps[hi - 1].len))), false});
      --hi;
    }
    if (lo < hi) {
      std::string core(piece.substr(off[lo], off[hi] - off[lo]));
      out.push_back({std::move(core), true});
    }
    for (auto it = tail.rbegin(); it != tail.rend(); ++it) out.push_back(std::move(*it));
  }
  return out;
}

std::string detokenize(std::span<const Token> tokens) {
  std::string s;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i].surface;
  }
  return s;
}

std::vector<Chunk> chunk_document(std::vector<Token> tokens, int chunk_size,
                                  int min_tail_words) {
  if (chunk_size <= 0) throw std::invalid_argument("chunk_document: chunk_size must be positive");
  if (min_tail_words < 0) throw std::invalid_argument("chunk_document: min_tail_words must be >= 0");
  std::vector<Chunk> out;
  size_t i = 0;
  while (i < tokens.size()) {
    size_t take = std::min(static_cast<size_t>(chunk_size), tokens.size() - i);
    Chunk c;
    c.tokens.assign(tokens.begin() + static_cast<ptrdiff_t>(i),
                    tokens.begin() + static_cast<ptrdiff_t>(i + take));
    i += take;
    // The discard rule applies to the short tail only; a full-size final
    // chunk is always kept.
    if (take < static_cast<size_t>(chunk_size) && c.word_count() < min_tail_words) continue;
    out.push_back(std::move(c));
  }
  return out;
}

const std::string& Vocabulary::unk_surface() {
  static const std::string unk = "<unk>";
  return unk;
}

int Vocabulary::encode(std::string_view token) const {
  auto it = ids.find(std::string(token));
  return it == ids.end() ? unk_id : it->second;
}

const std::string& Vocabulary::decode(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary::decode: bad id");
  return surfaces[static_cast<size_t>(id)];
}

Vocabulary build_vocabulary(std::span<const Chunk> training_chunks, int min_freq) {
  if (training_chunks.empty()) throw std::invalid_argument("build_vocabulary: empty corpus");
  std::map<std::string, int64_t> counts;  // ordered map gives the lexicographic tie-break
  for (const auto& ch : training_chunks)
    for (const auto& t : ch.tokens) ++counts[t.surface];

  std::vector<std::pair<std::string, int64_t>> entries(counts.begin(), counts.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  for (auto& [tok, freq] : entries) {
    if (freq < min_freq) continue;
    v.ids[tok] = static_cast<int>(v.surfaces.size());
    v.surfaces.push_back(tok);
    v.freq.push_back(freq);
  }
  v.unk_id = static_cast<int>(v.surfaces.size());
  v.surfaces.push_back(Vocabulary::unk_surface());
  v.freq.push_back(0);
  v.ids[Vocabulary::unk_surface()] = v.unk_id;
  return v;
}

std::vector<const Chunk*> Dataset::split_of(Split s) const {
  std::vector<const Chunk*> out;
  for (const auto& c : chunks)
    if (c.split == s) out.push_back(&c);
  return out;
}

std::vector<const Chunk*> Dataset::author_chunks(std::string_view author, Split s) const {
  std::vector<const Chunk*> out;
  for (const auto& c : chunks)
    if (c.split == s && c.author == author) out.push_back(&c);
  return out;
}

Dataset filter_and_split(std::span<const LabeledDocument> docs, const SplitRatios& ratios,
                         uint64_t seed, const FilterOptions& opt) {
  double total = ratios.train + ratios.validation + ratios.test;
  if (std::fabs(total - 1.0) > 1e-9)
    throw std::invalid_argument("filter_and_split: ratios must sum to 1");

  // Chunk everything first, keeping per-author order stable.
  struct Pending {
    Chunk chunk;
    std::optional<Split> fixed;
  };
  std::map<std::string, std::vector<Pending>> by_author;
  for (const auto& doc : docs) {
    auto chunks = chunk_document(tokenize(doc.text), opt.chunk_size, opt.min_tail_words);
    int idx = 0;
    for (auto& c : chunks) {
      c.id = doc.id + "#" + std::to_string(idx++);
      c.author = doc.author;
      by_author[doc.author].push_back({std::move(c), doc.split});
    }
  }
  if (by_author.empty()) throw std::invalid_argument("filter_and_split: no chunks produced");

  Dataset ds;
  ds.seed = seed;
  for (auto& [author, pendings] : by_author) {
    // Stratified ratio assignment for the unfixed chunks of this author.
    std::vector<size_t> loose;
    for (size_t i = 0; i < pendings.size(); ++i)
      if (!pendings[i].fixed) loose.push_back(i);
    if (!loose.empty()) {
      Rng rng(derive_seed(seed, std::string("split:") + author));
      rng.shuffle(loose);
      size_t n = loose.size();
      // Largest-remainder apportionment keeps per-split counts within ±1.
      double quota[3] = {ratios.train * n, ratios.validation * n, ratios.test * n};
      size_t base[3];
      double rem[3];
      size_t assigned = 0;
      for (int k = 0; k < 3; ++k) {
        base[k] = static_cast<size_t>(std::floor(quota[k]));
        rem[k] = quota[k] - static_cast<double>(base[k]);
        assigned += base[k];
      }
      while (assigned < n) {
        int best = 0;
        for (int k = 1; k < 3; ++k)
          if (rem[k] > rem[best]) best = k;
        ++base[best];
        rem[best] = -1.0;
        ++assigned;
      }
      size_t pos = 0;
      const Split order[3] = {Split::train, Split::validation, Split::test};
      for (int k = 0; k < 3; ++k)
        for (size_t j = 0; j < base[k]; ++j) pendings[loose[pos++]].fixed = order[k];
    }
  }

  // Author filtering on training counts.
  std::map<std::string, int> train_counts;
  for (const auto& [author, pendings] : by_author)
    for (const auto& p : pendings)
      if (*p.fixed == Split::train) ++train_counts[author];

  for (auto& [author, pendings] : by_author) {
    bool kept = train_counts[author] >= opt.min_author_chunks;
    if (kept) ds.authors.push_back(author);
    for (auto& p : pendings) {
      Split s = *p.fixed;
      if (!kept && s != Split::test) continue;  // open-set: test chunks stay
      p.chunk.split = s;
      ds.chunks.push_back(std::move(p.chunk));
    }
  }
  if (ds.authors.empty())
    throw std::invalid_argument("filter_and_split: every author fell below the chunk threshold");
  std::sort(ds.authors.begin(), ds.authors.end());
  return ds;
}

// --- synthetic corpus --------------------------------------------------------

namespace {

constexpr int kSynthVocab = 200;
constexpr int kSynthPunct = 8;
constexpr int kSynthCandidates = 8;

std::vector<std::string> synth_vocabulary(uint64_t seed) {
  static const char* syllables[] = {"ba", "do", "ki", "lu", "mer", "tan", "vo", "res",
                                    "nim", "pol", "sha", "gri", "ze", "fa", "qu", "ler",
                                    "oso", "ith", "ulm", "ard", "eni", "ost", "ura", "ek"};
  constexpr int n_syll = static_cast<int>(sizeof(syllables) / sizeof(syllables[0]));
  static const char* puncts[kSynthPunct] = {".", ",", ";", "!", "?", ":", "(", ")"};

  Rng rng(derive_seed(seed, "synth-vocab"));
  std::set<std::string> seen;
  std::vector<std::string> vocab;
  while (static_cast<int>(vocab.size()) < kSynthVocab - kSynthPunct) {
    int parts = 2 + static_cast<int>(rng.uniform_int(2));
    std::string w;
    for (int p = 0; p < parts; ++p) w += syllables[rng.uniform_int(n_syll)];
    if (seen.insert(w).second) vocab.push_back(std::move(w));
  }
  for (const char* p : puncts) vocab.emplace_back(p);
  return vocab;
}

double unit_hash(uint64_t seed, uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  uint64_t x = seed;
  x = derive_seed(x ^ (a * 0x9e3779b97f4a7c15ULL), "h1") ^ b;
  x = derive_seed(x ^ (c * 0xc2b2ae3d27d4eb4fULL) ^ (d * 0xd6e8feb86659fd93ULL), "h2");
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

std::vector<Token> synth_chain_tokens(uint64_t corpus_seed, int author_index, int n_tokens,
                                      Rng& rng) {
  auto vocab = synth_vocabulary(corpus_seed);
  const int V = static_cast<int>(vocab.size());
  std::vector<Token> out;
  out.reserve(static_cast<size_t>(n_tokens));
  int w1 = static_cast<int>(rng.uniform_int(V));
  int w2 = static_cast<int>(rng.uniform_int(V));
  std::vector<double> weights(kSynthCandidates);
  std::vector<int> cands(kSynthCandidates);
  for (int t = 0; t < n_tokens; ++t) {
    for (int j = 0; j < kSynthCandidates; ++j) {
      uint64_t state = static_cast<uint64_t>(w1) * 977 + static_cast<uint64_t>(w2);
      double pick = unit_hash(corpus_seed, 11, state, static_cast<uint64_t>(j), 0);
      cands[j] = static_cast<int>(pick * V) % V;
      double base = unit_hash(corpus_seed, 23, state, static_cast<uint64_t>(j), 1);
      // Author bias keyed by the candidate token: each author leans toward a
      // stable subset of the shared vocabulary at every transition.
      double author_pref = unit_hash(corpus_seed, 37 + static_cast<uint64_t>(author_index),
                                     static_cast<uint64_t>(cands[j]), 0, 2);
      weights[static_cast<size_t>(j)] = std::exp(1.2 * base + 4.0 * author_pref);
    }
    int next = cands[rng.categorical(weights)];
    const std::string& surf = vocab[static_cast<size_t>(next)];
    out.push_back({surf, contains_word_char(surf)});
    w1 = w2;
    w2 = next;
  }
  return out;
}

}  // namespace

std::vector<Chunk> synthetic_author_chunks(uint64_t corpus_seed, int author_index, int count,
                                           int chunk_size, std::string_view stream_tag) {
  Rng rng(derive_seed(corpus_seed, std::string(stream_tag) + ":author" + std::to_string(author_index)));
  std::vector<Chunk> out;
  for (int i = 0; i < count; ++i) {
    Chunk c;
    c.tokens = synth_chain_tokens(corpus_seed, author_index, chunk_size, rng);
    c.author = "author" + std::to_string(author_index);
    c.id = std::string(stream_tag) + "-a" + std::to_string(author_index) + "-" + std::to_string(i);
    out.push_back(std::move(c));
  }
  return out;
}

Dataset make_synthetic_corpus(int n_authors, int chunks_per_author, uint64_t seed,
                              int chunk_size) {
  if (n_authors < 2) throw std::invalid_argument("make_synthetic_corpus: need at least 2 authors");
  std::vector<LabeledDocument> docs;
  for (int a = 0; a < n_authors; ++a) {
    auto chunks = synthetic_author_chunks(seed, a, chunks_per_author, chunk_size, "corpus");
    for (auto& c : chunks)
      docs.push_back({c.id, c.text(), c.author, std::nullopt});
  }
  FilterOptions opt;
  opt.chunk_size = chunk_size;
  opt.min_tail_words = 0;
  return filter_and_split(docs, SplitRatios{0.7, 0.1, 0.2}, seed, opt);
}

// --- JSON-lines I/O -----------------------------------------------------------

namespace {
using nlohmann::json;

json parse_line(const std::string& line, const std::string& path, size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed JSON record");
  return j;
}
}  // namespace

std::vector<Chunk> ingest_generated(const std::string& path, const std::string& target_author,
                                    int chunk_size, int min_tail_words) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_generated: cannot open " + path);
  std::vector<Chunk> out;
  std::string line;
  size_t line_no = 0;
  size_t records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.eof()) break;
    json j = parse_line(line, path, line_no);
    if (!j.contains("text") || !j["text"].is_string())
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": record is missing a \"text\" field");
    ++records;
    auto chunks = chunk_document(tokenize(j["text"].get<std::string>()), chunk_size, min_tail_words);
    int idx = 0;
    for (auto& c : chunks) {
      c.id = "ingested#" + std::to_string(line_no) + "#" + std::to_string(idx++);
      c.author = target_author;
      c.origin = Origin::ingested;
      c.split = Split::train;
      out.push_back(std::move(c));
    }
  }
  if (records == 0) throw std::runtime_error("ingest_generated: " + path + " is empty");
  return out;
}

std::vector<LabeledDocument> read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_corpus_jsonl: cannot open " + path);
  std::vector<LabeledDocument> docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.eof()) break;
    json j = parse_line(line, path, line_no);
    for (const char* field : {"id", "text", "author"})
      if (!j.contains(field) || !j[field].is_string())
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": record is missing a \"" + std::string(field) + "\" field");
    LabeledDocument d;
    d.id = j["id"].get<std::string>();
    d.text = j["text"].get<std::string>();
    d.author = j["author"].get<std::string>();
    if (j.contains("split")) {
      std::string s = j["split"].get<std::string>();
      if (s == "train") d.split = Split::train;
      else if (s == "validation") d.split = Split::validation;
      else if (s == "test") d.split = Split::test;
      else
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown split \"" + s + "\"");
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

void write_corpus_jsonl(const std::string& path, std::span<const LabeledDocument> docs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_corpus_jsonl: cannot write " + path);
  for (const auto& d : docs) {
    json j{{"id", d.id}, {"text", d.text}, {"author", d.author}};
    if (d.split) j["split"] = split_name(*d.split);
    out << j.dump() << "\n";
  }
}

void write_dataset_jsonl(const std::string& path, const Dataset& ds) {
  std::vector<LabeledDocument> docs;
  docs.reserve(ds.chunks.size());
  for (const auto& c : ds.chunks)
    docs.push_back({c.id, c.text(), c.author, c.split});
  write_corpus_jsonl(path, docs);
}

}  // namespace av::corpus
