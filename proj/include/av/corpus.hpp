#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace av::corpus {

struct Token {
  std::string surface;
  bool is_word = false;  // false for pure punctuation
};

enum class Origin { real, generated, ingested };
enum class Split { train, validation, test };

const char* origin_name(Origin o);
const char* split_name(Split s);

struct Chunk {
  std::string id;
  std::string author;
  std::vector<Token> tokens;
  Origin origin = Origin::real;
  Split split = Split::train;

  int64_t word_count() const;
  std::string text() const;  // surfaces joined with single spaces
};

// Whitespace split with leading/trailing punctuation detached one character
// at a time; internal characters (apostrophes, hyphens, anything flanked by
// word characters) stay inside the token. Bytes are treated as UTF-8.
std::vector<Token> tokenize(std::string_view text);
std::string detokenize(std::span<const Token> tokens);

std::vector<Chunk> chunk_document(std::vector<Token> tokens, int chunk_size = 100,
                                  int min_tail_words = 25);

struct Vocabulary {
  std::vector<std::string> surfaces;  // id -> token, UNK last
  std::vector<int64_t> freq;
  std::unordered_map<std::string, int> ids;
  int unk_id = 0;

  int size() const { return static_cast<int>(surfaces.size()); }
  int encode(std::string_view token) const;
  const std::string& decode(int id) const;
  static const std::string& unk_surface();
};

Vocabulary build_vocabulary(std::span<const Chunk> training_chunks, int min_freq);

struct LabeledDocument {
  std::string id;
  std::string text;
  std::string author;
  std::optional<Split> split;  // honored when present; otherwise ratio-split
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct Dataset {
  std::vector<Chunk> chunks;
  std::vector<std::string> authors;  // training authors, sorted
  uint64_t seed = 0;

  std::vector<const Chunk*> split_of(Split s) const;
  std::vector<const Chunk*> author_chunks(std::string_view author, Split s) const;
};

struct FilterOptions {
  int chunk_size = 100;
  int min_tail_words = 25;
  int min_author_chunks = 10;  // minimum training chunks per retained author
};

// Chunks every document, then assigns splits (explicit splits are honored,
// the rest are ratio-split per author, stratified and seeded). Authors with
// fewer than min_author_chunks training chunks are dropped from train and
// validation; their test chunks stay as open-set negatives.
Dataset filter_and_split(std::span<const LabeledDocument> docs, const SplitRatios& ratios,
                         uint64_t seed, const FilterOptions& opt = {});

// Synthetic corpus: every author is a distinct order-2 Markov chain over a
// shared 200-token vocabulary with author-specific transition biases. Each
// author contributes `chunks_per_author` chunks of exactly `chunk_size`
// tokens, split 70/10/20.
Dataset make_synthetic_corpus(int n_authors, int chunks_per_author, uint64_t seed,
                              int chunk_size = 100);

// Extra draws from one synthetic author's chain, on an independent stream.
// Used to simulate a forger with access to the author's true distribution.
std::vector<Chunk> synthetic_author_chunks(uint64_t corpus_seed, int author_index,
                                           int count, int chunk_size,
                                           std::string_view stream_tag);

// JSON-lines ingestion of externally generated text: {"text": ...} per line.
// Every resulting chunk carries origin=ingested and the target author.
std::vector<Chunk> ingest_generated(const std::string& path, const std::string& target_author,
                                    int chunk_size = 100, int min_tail_words = 25);

// Corpus interchange format: one record per line with fields
// {"id", "text", "author", "split"?}.
std::vector<LabeledDocument> read_corpus_jsonl(const std::string& path);
void write_corpus_jsonl(const std::string& path, std::span<const LabeledDocument> docs);

// Serializes chunk text per record, preserving split assignments.
void write_dataset_jsonl(const std::string& path, const Dataset& ds);

}  // namespace av::corpus
