#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "av/corpus.hpp"
#include "av/rng.hpp"
#include "av/stylometry.hpp"
#include "av/svm.hpp"
#include "doctest.h"

using namespace av::corpus;

namespace {

std::vector<Token> word_tokens(int n, const std::string& w = "word") {
  std::vector<Token> out;
  for (int i = 0; i < n; ++i) out.push_back({w, true});
  return out;
}

Chunk chunk_of(std::vector<Token> tokens) {
  Chunk c;
  c.tokens = std::move(tokens);
  return c;
}

}  // namespace

TEST_CASE("tokenize splits punctuation off words") {
  auto toks = tokenize("Hello, world!");
  REQUIRE(toks.size() == 4);
  CHECK(toks[0].surface == "Hello");
  CHECK(toks[1].surface == ",");
  CHECK(toks[2].surface == "world");
  CHECK(toks[3].surface == "!");
  CHECK(toks[0].is_word);
  CHECK(!toks[1].is_word);
  CHECK(toks[2].is_word);
  CHECK(!toks[3].is_word);
}

TEST_CASE("tokenize of empty text is empty") {
  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t\n ").empty());
}

TEST_CASE("fixed paragraph matches its hand-counted tokenization") {
  // 63 tokens by hand: 48 words plus 15 punctuation marks. Internal
  // apostrophes and hyphens stay inside words; brackets and sentence
  // punctuation split off.
  const std::string paragraph =
      "The quick brown fox jumps over the lazy dog. "
      "It was a bright morning, and the birds sang. "
      "Nobody expected rain; still, clouds gathered slowly. "
      "Don't forget the well-known rule: always check twice! "
      "After (almost) an hour, the storm arrived. "
      "Every ending, however small, deserves a quiet cheer.";
  auto toks = tokenize(paragraph);
  CHECK(toks.size() == 63);
  int words = 0;
  for (const auto& t : toks)
    if (t.is_word) ++words;
  CHECK(words == 48);
  bool has_dont = false, has_wellknown = false;
  for (const auto& t : toks) {
    if (t.surface == "Don't") has_dont = true;
    if (t.surface == "well-known") has_wellknown = true;
  }
  CHECK(has_dont);
  CHECK(has_wellknown);
}

TEST_CASE("tokenization is stable under detokenize/retokenize") {
  av::Rng rng(42);
  const std::vector<std::string> pieces = {"alpha", "don't",  "x9",     "(bracketed)",
                                           "word.", "co-op",  "Hello,", "...",
                                           "beta!", "\"say\"", "mid-dle", "zz"};
  for (int trial = 0; trial < 50; ++trial) {
    std::string text;
    int n = 1 + static_cast<int>(rng.uniform_int(20));
    for (int i = 0; i < n; ++i) {
      if (i) text += ' ';
      text += pieces[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(pieces.size())))];
    }
    auto first = tokenize(text);
    auto second = tokenize(detokenize(first));
    REQUIRE(first.size() == second.size());
    for (size_t i = 0; i < first.size(); ++i) {
      CHECK(first[i].surface == second[i].surface);
      CHECK(first[i].is_word == second[i].is_word);
    }
  }
}

TEST_CASE("chunking keeps a 26-word tail and drops a 20-word tail") {
  auto tokens = word_tokens(200);
  // final 30 tokens: 26 words + 4 punctuation
  for (int i = 0; i < 26; ++i) tokens.push_back({"tail", true});
  for (int i = 0; i < 4; ++i) tokens.push_back({".", false});
  {
    auto chunks = chunk_document(tokens, 100, 25);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].tokens.size() == 100);
    CHECK(chunks[1].tokens.size() == 100);
    CHECK(chunks[2].tokens.size() == 30);
    int words = 0;
    for (const auto& t : chunks[2].tokens)
      if (t.is_word) ++words;
    CHECK(words == 26);
  }
  // same length, but only 20 words in the tail
  tokens.resize(200);
  for (int i = 0; i < 20; ++i) tokens.push_back({"tail", true});
  for (int i = 0; i < 10; ++i) tokens.push_back({".", false});
  {
    auto chunks = chunk_document(tokens, 100, 25);
    REQUIRE(chunks.size() == 2);
  }
}

TEST_CASE("chunking an exact multiple produces full chunks only") {
  auto chunks = chunk_document(word_tokens(100), 100, 25);
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].tokens.size() == 100);
}

TEST_CASE("chunking conserves tokens apart from the discarded tail") {
  av::Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(350));
    std::vector<Token> tokens;
    for (int i = 0; i < n; ++i) {
      bool word = rng.uniform() < 0.8;
      tokens.push_back({word ? "w" : ",", word});
    }
    auto chunks = chunk_document(tokens, 100, 25);
    size_t total = 0;
    for (size_t i = 0; i < chunks.size(); ++i) {
      total += chunks[i].tokens.size();
      if (i + 1 < chunks.size()) CHECK(chunks[i].tokens.size() == 100);
    }
    size_t tail = tokens.size() % 100;
    bool tail_kept = !chunks.empty() && chunks.back().tokens.size() == tail && tail != 0;
    if (tail_kept)
      CHECK(total == tokens.size());
    else
      CHECK(total == tokens.size() - tail);
  }
}

TEST_CASE("vocabulary orders ids by frequency then lexicographically") {
  auto chunks = std::vector<Chunk>{chunk_of(tokenize("a a b"))};
  auto v = build_vocabulary(chunks, 1);
  CHECK(v.encode("a") == 0);
  CHECK(v.encode("b") == 1);
  CHECK(v.unk_id == 2);
  CHECK(v.size() == 3);

  auto v2 = build_vocabulary(chunks, 2);
  CHECK(v2.encode("a") == 0);
  CHECK(v2.encode("b") == v2.unk_id);
  CHECK(v2.size() == 2);
}

TEST_CASE("vocabulary rejects an empty corpus") {
  std::vector<Chunk> none;
  CHECK_THROWS_WITH_AS(build_vocabulary(none, 1), doctest::Contains("empty corpus"),
                       std::invalid_argument);
}

TEST_CASE("vocabulary size matches a brute-force frequency count") {
  av::Rng rng(31);
  std::vector<std::string> pool;
  for (int i = 0; i < 60; ++i) pool.push_back("tok" + std::to_string(i));
  std::vector<Token> tokens;
  for (int i = 0; i < 1000; ++i)
    tokens.push_back({pool[static_cast<size_t>(rng.uniform_int(60))], true});
  auto chunks = chunk_document(tokens, 100, 0);
  const int min_freq = 12;
  auto v = build_vocabulary(chunks, min_freq);

  std::map<std::string, int> counts;
  for (const auto& t : tokens) ++counts[t.surface];
  int expected = 0;
  for (const auto& [w, n] : counts)
    if (n >= min_freq) ++expected;
  CHECK(v.size() == expected + 1);  // plus UNK
  for (int id = 0; id < v.size(); ++id) CHECK(v.encode(v.decode(id)) == id);
}

namespace {

std::string words_doc(av::Rng& rng, int n_words) {
  std::string text;
  for (int i = 0; i < n_words; ++i) {
    if (i) text += ' ';
    text += "w" + std::to_string(rng.uniform_int(50));
  }
  return text;
}

}  // namespace

TEST_CASE("splitting validates its ratios and refuses empty results") {
  av::Rng rng(44);
  std::vector<LabeledDocument> docs{{"d0", words_doc(rng, 30), "solo", Split::train}};
  CHECK_THROWS_AS(filter_and_split(docs, {0.5, 0.2, 0.2}, 1), std::invalid_argument);
  // a single author with one chunk falls below the training threshold
  CHECK_THROWS_AS(filter_and_split(docs, {0.8, 0.1, 0.1}, 1), std::invalid_argument);
}

TEST_CASE("authors with fewer than 10 training chunks are excluded") {
  av::Rng rng(5);
  std::vector<LabeledDocument> docs;
  for (int i = 0; i < 9; ++i)
    docs.push_back({"thin" + std::to_string(i), words_doc(rng, 30), "thin", Split::train});
  for (int i = 0; i < 12; ++i)
    docs.push_back({"fat" + std::to_string(i), words_doc(rng, 30), "fat", Split::train});
  for (int i = 0; i < 3; ++i)
    docs.push_back({"ft" + std::to_string(i), words_doc(rng, 30), "fat", Split::test});
  docs.push_back({"tt0", words_doc(rng, 30), "thin", Split::test});
  docs.push_back({"tv0", words_doc(rng, 30), "thin", Split::validation});

  auto ds = filter_and_split(docs, {0.8, 0.1, 0.1}, 1);
  REQUIRE(ds.authors.size() == 1);
  CHECK(ds.authors[0] == "fat");
  // the thin author's test chunks stay as open-set negatives
  int thin_test = 0, thin_other = 0;
  for (const auto& c : ds.chunks) {
    if (c.author != "thin") continue;
    (c.split == Split::test ? thin_test : thin_other)++;
  }
  CHECK(thin_test == 1);
  CHECK(thin_other == 0);
}

TEST_CASE("splitting is deterministic and stratified within one chunk") {
  av::Rng rng(6);
  std::vector<LabeledDocument> docs;
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < 23; ++i)
      docs.push_back({"d" + std::to_string(a) + "_" + std::to_string(i), words_doc(rng, 30),
                      "author" + std::to_string(a), std::nullopt});
  SplitRatios ratios{0.7, 0.1, 0.2};
  auto ds1 = filter_and_split(docs, ratios, 99);
  auto ds2 = filter_and_split(docs, ratios, 99);
  REQUIRE(ds1.chunks.size() == ds2.chunks.size());
  for (size_t i = 0; i < ds1.chunks.size(); ++i) {
    CHECK(ds1.chunks[i].id == ds2.chunks[i].id);
    CHECK(ds1.chunks[i].split == ds2.chunks[i].split);
  }
  for (int a = 0; a < 3; ++a) {
    std::string author = "author" + std::to_string(a);
    double counts[3] = {0, 0, 0};
    for (const auto& c : ds1.chunks)
      if (c.author == author) counts[static_cast<int>(c.split)] += 1;
    CHECK(std::fabs(counts[0] - 0.7 * 23) <= 1.0);
    CHECK(std::fabs(counts[1] - 0.1 * 23) <= 1.0);
    CHECK(std::fabs(counts[2] - 0.2 * 23) <= 1.0);
  }
}

TEST_CASE("a 10-author 800/89/270 corpus is representable and round-trips") {
  av::Rng rng(7);
  std::vector<LabeledDocument> docs;
  auto add = [&](int count, Split split, const std::string& tag) {
    for (int i = 0; i < count; ++i) {
      std::string author = "author" + std::to_string(i % 10);
      docs.push_back({tag + std::to_string(i), words_doc(rng, 30), author, split});
    }
  };
  add(800, Split::train, "tr");
  add(89, Split::validation, "va");
  add(270, Split::test, "te");

  write_corpus_jsonl("ebg_shape.jsonl", docs);
  auto loaded = read_corpus_jsonl("ebg_shape.jsonl");
  REQUIRE(loaded.size() == docs.size());
  for (size_t i = 0; i < docs.size(); ++i) {
    CHECK(loaded[i].id == docs[i].id);
    CHECK(loaded[i].text == docs[i].text);
    CHECK(loaded[i].author == docs[i].author);
    CHECK(loaded[i].split == docs[i].split);
  }

  auto ds = filter_and_split(loaded, {0.8, 0.1, 0.1}, 3);
  CHECK(ds.authors.size() == 10);
  CHECK(ds.split_of(Split::train).size() == 800);
  CHECK(ds.split_of(Split::validation).size() == 89);
  CHECK(ds.split_of(Split::test).size() == 270);
}

TEST_CASE("synthetic corpus has the requested shape and is reproducible") {
  auto ds1 = make_synthetic_corpus(5, 100, 7, 50);
  CHECK(ds1.chunks.size() == 500);
  CHECK(ds1.authors.size() == 5);
  auto ds2 = make_synthetic_corpus(5, 100, 7, 50);
  REQUIRE(ds1.chunks.size() == ds2.chunks.size());
  for (size_t i = 0; i < ds1.chunks.size(); ++i) {
    REQUIRE(ds1.chunks[i].tokens.size() == ds2.chunks[i].tokens.size());
    for (size_t t = 0; t < ds1.chunks[i].tokens.size(); ++t)
      CHECK(ds1.chunks[i].tokens[t].surface == ds2.chunks[i].tokens[t].surface);
  }
  auto ds3 = make_synthetic_corpus(5, 100, 8, 50);
  bool all_same = true;
  for (size_t i = 0; i < std::min(ds1.chunks.size(), ds3.chunks.size()); ++i)
    if (ds1.chunks[i].text() != ds3.chunks[i].text()) all_same = false;
  CHECK(!all_same);
}

TEST_CASE("synthetic authors are separable by char trigrams and a linear svm") {
  auto ds = make_synthetic_corpus(5, 40, 11, 60);
  std::vector<Chunk> train, test;
  for (const auto& c : ds.chunks)
    (c.split == Split::test ? test : train).push_back(c);  // train + validation pooled

  auto vocab3 = av::style::fit_char_ngrams(train, 3, 3);
  auto densify = [&](const Chunk& c) {
    auto sv = av::style::char_ngrams(c, vocab3);
    std::vector<double> x(static_cast<size_t>(sv.dim), 0.0);
    for (auto& [i, v] : sv.items) x[static_cast<size_t>(i)] = v;
    return x;
  };

  // one-vs-rest linear classifiers; closed-set decision by largest margin
  std::vector<av::clf::TrainedSvm> models;
  for (const auto& author : ds.authors) {
    av::clf::SvmProblem prob;
    prob.x = av::nn::Mat(static_cast<int64_t>(train.size()), vocab3.dim());
    for (size_t i = 0; i < train.size(); ++i) {
      auto x = densify(train[i]);
      std::copy(x.begin(), x.end(), prob.x.v.begin() + static_cast<int64_t>(i) * vocab3.dim());
      prob.y.push_back(train[i].author == author ? 1 : -1);
    }
    av::clf::SvmTrainOptions opt;
    opt.C = 10.0;
    opt.kernel.kind = av::clf::Kernel::linear;
    models.push_back(av::clf::svm_fit(prob, opt));
  }
  int correct = 0;
  for (const auto& c : test) {
    auto x = densify(c);
    size_t best = 0;
    double best_margin = -1e300;
    for (size_t a = 0; a < models.size(); ++a) {
      double m = models[a].decision(x);
      if (m > best_margin) {
        best_margin = m;
        best = a;
      }
    }
    if (ds.authors[best] == c.author) ++correct;
  }
  double acc = static_cast<double>(correct) / static_cast<double>(test.size());
  CHECK(acc > 0.9);
}

TEST_CASE("ingestion tokenizes and labels generated text") {
  av::Rng rng(13);
  {
    std::ofstream out("gen_ok.jsonl");
    for (int i = 0; i < 3; ++i)
      out << "{\"text\": \"" << words_doc(rng, 30) << "\"}\n";
  }
  auto chunks = ingest_generated("gen_ok.jsonl", "alice", 100, 25);
  CHECK(chunks.size() >= 3);
  for (const auto& c : chunks) {
    CHECK(c.origin == Origin::ingested);
    CHECK(c.author == "alice");
  }
}

TEST_CASE("ingestion reports the offending line number") {
  {
    std::ofstream out("gen_bad.jsonl");
    out << "{\"text\": \"one fine day in the middle of the night two dead men got up to "
           "fight back to back they faced each other drew their swords and shot\"}\n";
    out << "{\"string\": \"no text field here\"}\n";
  }
  CHECK_THROWS_WITH_AS(ingest_generated("gen_bad.jsonl", "alice"), doctest::Contains(":2"),
                       std::runtime_error);
  {
    std::ofstream out("gen_empty.jsonl");
  }
  CHECK_THROWS_AS(ingest_generated("gen_empty.jsonl", "alice"), std::runtime_error);
  CHECK_THROWS_AS(ingest_generated("gen_missing_file.jsonl", "alice"), std::runtime_error);
}

TEST_CASE("ingested chunk count matches an independent re-tokenization") {
  av::Rng rng(17);
  std::vector<std::string> texts;
  for (int i = 0; i < 8; ++i)
    texts.push_back(words_doc(rng, 60 + static_cast<int>(rng.uniform_int(80))));
  {
    std::ofstream out("gen_count.jsonl");
    for (const auto& t : texts) out << "{\"text\": \"" << t << "\"}\n";
  }
  auto chunks = ingest_generated("gen_count.jsonl", "bob", 50, 10);
  size_t expected = 0;
  for (const auto& t : texts) expected += chunk_document(tokenize(t), 50, 10).size();
  CHECK(chunks.size() == expected);
}
