#include "av/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "av/rng.hpp"

namespace av::harness {

using corpus::Chunk;
using corpus::Dataset;
using corpus::Origin;
using corpus::Split;

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (!is || !(is >> std::ws).eof())
    throw UsageError("config: bad numeric value for " + key + ": '" + v + "'");
  return out;
}

}  // namespace

void apply_config_line(ExperimentConfig& cfg, const std::string& raw, int line_no) {
  std::string line = trim(raw);
  if (line.empty() || line[0] == '#') return;
  auto eq = line.find('=');
  if (eq == std::string::npos)
    throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
  std::string key = trim(line.substr(0, eq));
  std::string val = trim(line.substr(eq + 1));

  auto strategy_from = [](const std::string& v) {
    if (v == "topk") return gen::SamplingConfig::Strategy::topk;
    if (v == "categorical") return gen::SamplingConfig::Strategy::categorical;
    if (v == "argmax") return gen::SamplingConfig::Strategy::argmax;
    throw UsageError("config: unknown sampling strategy '" + v + "'");
  };

  if (key == "dataset") cfg.dataset_path = val;
  else if (key == "ingested") cfg.ingested_path = val;
  else if (key == "seed") cfg.seed = parse_num<uint64_t>(val, key);
  else if (key == "classifier") {
    if (val == "svm") cfg.classifier = ClassifierKind::svm;
    else if (val == "cnn") cfg.classifier = ClassifierKind::cnn;
    else throw UsageError("config: unknown classifier '" + val + "'");
  } else if (key == "generator") {
    if (val == "gru") cfg.generator = GeneratorKind::gru;
    else if (val == "tra") cfg.generator = GeneratorKind::tra;
    else if (val == "ingested") cfg.generator = GeneratorKind::ingested;
    else throw UsageError("config: unknown generator '" + val + "'");
  } else if (key == "encoding") {
    if (val == "1h") cfg.encoding = gen::Encoding::one_hot;
    else if (val == "emb") cfg.encoding = gen::Encoding::emb;
    else throw UsageError("config: unknown encoding '" + val + "'");
  } else if (key == "training") {
    if (val == "lmtr") cfg.training = TrainingKind::lmtr;
    else if (val == "gantr") cfg.training = TrainingKind::gantr;
    else throw UsageError("config: unknown training '" + val + "'");
  } else if (key == "corpus.chunk_size") cfg.chunk_size = parse_num<int>(val, key);
  else if (key == "corpus.min_tail_words") cfg.min_tail_words = parse_num<int>(val, key);
  else if (key == "corpus.min_author_chunks") cfg.min_author_chunks = parse_num<int>(val, key);
  else if (key == "corpus.vocab_min_freq") cfg.vocab_min_freq = parse_num<int>(val, key);
  else if (key == "corpus.ratio_train") cfg.ratios.train = parse_num<double>(val, key);
  else if (key == "corpus.ratio_validation") cfg.ratios.validation = parse_num<double>(val, key);
  else if (key == "corpus.ratio_test") cfg.ratios.test = parse_num<double>(val, key);
  else if (key == "generator.proj_dim") cfg.gen_cfg.proj_dim = parse_num<int64_t>(val, key);
  else if (key == "generator.hidden") cfg.gen_cfg.hidden = parse_num<int64_t>(val, key);
  else if (key == "generator.layers") cfg.gen_cfg.layers = parse_num<int>(val, key);
  else if (key == "generator.heads") cfg.gen_cfg.heads = parse_num<int>(val, key);
  else if (key == "generator.mid_dim") cfg.gen_cfg.mid_dim = parse_num<int64_t>(val, key);
  else if (key == "generator.emb_dim") cfg.gen_cfg.emb_dim = parse_num<int64_t>(val, key);
  else if (key == "generator.min_prefix") cfg.gen_cfg.min_prefix = parse_num<int>(val, key);
  else if (key == "lm.epochs") cfg.lm.epochs = parse_num<int>(val, key);
  else if (key == "lm.lr") cfg.lm.lr = parse_num<double>(val, key);
  else if (key == "lm.weight_decay") cfg.lm.weight_decay = parse_num<double>(val, key);
  else if (key == "sampling.strategy") cfg.sampling.strategy = strategy_from(val);
  else if (key == "sampling.k") cfg.sampling.k = parse_num<int>(val, key);
  else if (key == "sampling.block_ngram") cfg.sampling.block_ngram = parse_num<int>(val, key);
  else if (key == "sampling.temperature") cfg.sampling.temperature = parse_num<double>(val, key);
  else if (key == "gan.epochs") cfg.gan.epochs = parse_num<int>(val, key);
  else if (key == "gan.d_epochs") cfg.gan.d_epochs_per_step = parse_num<int>(val, key);
  else if (key == "gan.lambda_gp") cfg.gan.lambda_gp = parse_num<double>(val, key);
  else if (key == "gan.lr") cfg.gan.lr = parse_num<double>(val, key);
  else if (key == "gan.batch") cfg.gan.batch = parse_num<int>(val, key);
  else if (key == "gan.gumbel_tau") cfg.gan.gumbel_tau = parse_num<double>(val, key);
  else if (key == "augment.factor") cfg.augment_factor = parse_num<int>(val, key);
  else if (key == "augment.cap") cfg.augment_cap = parse_num<int>(val, key);
  else if (key == "cnn.proj_dim") cfg.cnn.proj_dim = parse_num<int64_t>(val, key);
  else if (key == "cnn.conv_w1") cfg.cnn.conv_w1 = parse_num<int64_t>(val, key);
  else if (key == "cnn.conv_w2") cfg.cnn.conv_w2 = parse_num<int64_t>(val, key);
  else if (key == "cnn.trunk_dim") cfg.cnn.trunk_dim = parse_num<int64_t>(val, key);
  else if (key == "cnn.bf_hidden") cfg.cnn.bf_hidden = parse_num<int64_t>(val, key);
  else if (key == "cnn.bf_out") cfg.cnn.bf_out = parse_num<int64_t>(val, key);
  else if (key == "cnn.dropout") cfg.cnn.dropout = parse_num<double>(val, key);
  else if (key == "recipe.lr") cfg.recipe.lr = parse_num<double>(val, key);
  else if (key == "recipe.weight_decay") cfg.recipe.weight_decay = parse_num<double>(val, key);
  else if (key == "recipe.batch") cfg.recipe.batch = parse_num<int>(val, key);
  else if (key == "recipe.min_epochs") cfg.recipe.min_epochs = parse_num<int>(val, key);
  else if (key == "recipe.max_epochs") cfg.recipe.max_epochs = parse_num<int>(val, key);
  else if (key == "recipe.patience") cfg.recipe.patience = parse_num<int>(val, key);
  else if (key == "recipe.finetune_epochs") cfg.recipe.finetune_epochs = parse_num<int>(val, key);
  else if (key == "svm.chi2_keep") cfg.chi2_keep = parse_num<double>(val, key);
  else if (key == "data.stopwords") cfg.stopwords_path = val;
  else if (key == "data.pos_lexicon") cfg.pos_lexicon_path = val;
  else if (key == "data.pos_suffix") cfg.pos_suffix_path = val;
  else throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  ExperimentConfig cfg = default_config();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) apply_config_line(cfg, line, ++line_no);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.classifier == ClassifierKind::svm && cfg.encoding == gen::Encoding::emb &&
      cfg.generator != GeneratorKind::ingested)
    throw UsageError(
        "config: svm cannot be combined with emb-encoded internal generators "
        "(no plain text to extract features from)");
  if (cfg.generator == GeneratorKind::ingested && cfg.ingested_path.empty())
    throw UsageError("config: generator=ingested requires an 'ingested' path");
  if (cfg.chunk_size <= 0) throw UsageError("config: corpus.chunk_size must be positive");
  double rs = cfg.ratios.train + cfg.ratios.validation + cfg.ratios.test;
  if (std::fabs(rs - 1.0) > 1e-9) throw UsageError("config: split ratios must sum to 1");
  if (cfg.recipe.min_epochs > cfg.recipe.max_epochs)
    throw UsageError("config: recipe.min_epochs must not exceed recipe.max_epochs");
  if (cfg.gen_cfg.min_prefix < 1) throw UsageError("config: generator.min_prefix must be >= 1");
}

std::string config_canonical(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "classifier = " << (c.classifier == ClassifierKind::svm ? "svm" : "cnn") << "\n";
  os << "generator = "
     << (c.generator == GeneratorKind::gru      ? "gru"
         : c.generator == GeneratorKind::tra    ? "tra"
                                                : "ingested")
     << "\n";
  os << "encoding = " << (c.encoding == gen::Encoding::one_hot ? "1h" : "emb") << "\n";
  os << "training = " << (c.training == TrainingKind::lmtr ? "lmtr" : "gantr") << "\n";
  os << "seed = " << c.seed << "\n";
  os << "dataset = " << c.dataset_path << "\n";
  os << "ingested = " << c.ingested_path << "\n";
  os << "corpus.chunk_size = " << c.chunk_size << "\n";
  os << "corpus.min_tail_words = " << c.min_tail_words << "\n";
  os << "corpus.min_author_chunks = " << c.min_author_chunks << "\n";
  os << "corpus.vocab_min_freq = " << c.vocab_min_freq << "\n";
  os << "corpus.ratio_train = " << c.ratios.train << "\n";
  os << "corpus.ratio_validation = " << c.ratios.validation << "\n";
  os << "corpus.ratio_test = " << c.ratios.test << "\n";
  os << "generator.proj_dim = " << c.gen_cfg.proj_dim << "\n";
  os << "generator.hidden = " << c.gen_cfg.hidden << "\n";
  os << "generator.layers = " << c.gen_cfg.layers << "\n";
  os << "generator.heads = " << c.gen_cfg.heads << "\n";
  os << "generator.mid_dim = " << c.gen_cfg.mid_dim << "\n";
  os << "generator.emb_dim = " << c.gen_cfg.emb_dim << "\n";
  os << "generator.min_prefix = " << c.gen_cfg.min_prefix << "\n";
  os << "lm.epochs = " << c.lm.epochs << "\n";
  os << "lm.lr = " << c.lm.lr << "\n";
  os << "lm.weight_decay = " << c.lm.weight_decay << "\n";
  os << "sampling.strategy = "
     << (c.sampling.strategy == gen::SamplingConfig::Strategy::topk          ? "topk"
         : c.sampling.strategy == gen::SamplingConfig::Strategy::categorical ? "categorical"
                                                                             : "argmax")
     << "\n";
  os << "sampling.k = " << c.sampling.k << "\n";
  os << "sampling.block_ngram = " << c.sampling.block_ngram << "\n";
  os << "sampling.temperature = " << c.sampling.temperature << "\n";
  os << "gan.epochs = " << c.gan.epochs << "\n";
  os << "gan.d_epochs = " << c.gan.d_epochs_per_step << "\n";
  os << "gan.lambda_gp = " << c.gan.lambda_gp << "\n";
  os << "gan.lr = " << c.gan.lr << "\n";
  os << "gan.batch = " << c.gan.batch << "\n";
  os << "gan.gumbel_tau = " << c.gan.gumbel_tau << "\n";
  os << "augment.factor = " << c.augment_factor << "\n";
  os << "augment.cap = " << c.augment_cap << "\n";
  os << "cnn.proj_dim = " << c.cnn.proj_dim << "\n";
  os << "cnn.conv_w1 = " << c.cnn.conv_w1 << "\n";
  os << "cnn.conv_w2 = " << c.cnn.conv_w2 << "\n";
  os << "cnn.trunk_dim = " << c.cnn.trunk_dim << "\n";
  os << "cnn.bf_hidden = " << c.cnn.bf_hidden << "\n";
  os << "cnn.bf_out = " << c.cnn.bf_out << "\n";
  os << "cnn.dropout = " << c.cnn.dropout << "\n";
  os << "recipe.lr = " << c.recipe.lr << "\n";
  os << "recipe.weight_decay = " << c.recipe.weight_decay << "\n";
  os << "recipe.batch = " << c.recipe.batch << "\n";
  os << "recipe.min_epochs = " << c.recipe.min_epochs << "\n";
  os << "recipe.max_epochs = " << c.recipe.max_epochs << "\n";
  os << "recipe.patience = " << c.recipe.patience << "\n";
  os << "recipe.finetune_epochs = " << c.recipe.finetune_epochs << "\n";
  os << "svm.chi2_keep = " << c.chi2_keep << "\n";
  os << "data.stopwords = " << c.stopwords_path << "\n";
  os << "data.pos_lexicon = " << c.pos_lexicon_path << "\n";
  os << "data.pos_suffix = " << c.pos_suffix_path << "\n";
  return os.str();
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string s = config_canonical(cfg);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- round machinery ----

namespace {

struct RoundContext {
  const Dataset& dataset;
  std::string author;
  const ExperimentConfig& cfg;
  uint64_t round_seed = 0;

  RoundContext(const Dataset& ds, std::string a, const ExperimentConfig& c)
      : dataset(ds), author(std::move(a)), cfg(c) {}

  std::vector<const Chunk*> train, validation, test;
  corpus::Vocabulary vocab;
  std::vector<std::string> stopwords;
  style::PosTagger tagger;

  bool positive(const Chunk& c) const {
    return c.author == author && c.origin == Origin::real;
  }
};

RoundContext make_context(const Dataset& ds, const std::string& author,
                          const ExperimentConfig& cfg) {
  validate(cfg);
  bool known = std::find(ds.authors.begin(), ds.authors.end(), author) != ds.authors.end();
  if (!known) throw std::invalid_argument("run_round: unknown author '" + author + "'");

  RoundContext ctx(ds, author, cfg);
  ctx.round_seed = derive_seed(cfg.seed, "round:" + author);
  ctx.train = ds.split_of(Split::train);
  ctx.validation = ds.split_of(Split::validation);
  ctx.test = ds.split_of(Split::test);
  if (ctx.train.empty() || ctx.validation.empty() || ctx.test.empty())
    throw std::invalid_argument("run_round: dataset needs non-empty train/validation/test splits");

  std::vector<Chunk> train_copy;
  train_copy.reserve(ctx.train.size());
  for (const auto* c : ctx.train) train_copy.push_back(*c);
  ctx.vocab = corpus::build_vocabulary(train_copy, cfg.vocab_min_freq);

  ctx.stopwords = cfg.stopwords_path.empty() ? style::bundled_stopwords()
                                             : style::load_stopwords(cfg.stopwords_path);
  ctx.tagger = cfg.pos_lexicon_path.empty()
                   ? style::PosTagger::bundled()
                   : style::PosTagger::from_files(cfg.pos_lexicon_path, cfg.pos_suffix_path);
  return ctx;
}

// Augmentation products for one round: token chunks (1h / ingested) or dense
// sequences (emb).
struct Augmentation {
  std::vector<Chunk> chunks;
  std::vector<nn::Mat> dense;
  gan::GanTrace trace;
  int64_t count() const {
    return static_cast<int64_t>(chunks.size() + dense.size());
  }
};

std::vector<Chunk> author_train_chunks(const RoundContext& ctx) {
  std::vector<Chunk> out;
  for (const auto* c : ctx.train)
    if (c->author == ctx.author) out.push_back(*c);
  return out;
}

Augmentation build_augmentation(const RoundContext& ctx) {
  const auto& cfg = ctx.cfg;
  Augmentation aug;
  if (cfg.generator == GeneratorKind::ingested) {
    aug.chunks = corpus::ingest_generated(cfg.ingested_path, ctx.author, cfg.chunk_size,
                                          cfg.min_tail_words);
    return aug;
  }

  auto a_chunks = author_train_chunks(ctx);
  if (a_chunks.empty())
    throw std::invalid_argument("run_round: author has no training chunks");

  gen::GeneratorConfig gcfg = cfg.gen_cfg;
  gcfg.arch = cfg.generator == GeneratorKind::gru ? gen::Arch::gru : gen::Arch::tra;
  gcfg.encoding = cfg.encoding;
  uint64_t gen_seed = derive_seed(ctx.round_seed, "generator");
  gen::GeneratorModel model = gen::GeneratorModel::init(gcfg, ctx.vocab, gen_seed);

  gen::EmbeddingTable table;
  const bool emb = cfg.encoding == gen::Encoding::emb;
  if (emb)
    table = gen::EmbeddingTable::gaussian(ctx.vocab.size(), gcfg.emb_dim, cfg.seed);

  if (cfg.training == TrainingKind::lmtr) {
    auto res = emb ? gen::lm_train_emb(model, a_chunks, table, cfg.lm, gen_seed)
                   : gen::lm_train(model, a_chunks, cfg.lm, gen_seed);
    for (double l : res.epoch_loss)
      if (!std::isfinite(l))
        throw std::runtime_error("run_round: generator training diverged (non-finite loss)");
  } else {
    gan::GanConfig gan_cfg = cfg.gan;
    gan_cfg.seed = derive_seed(ctx.round_seed, "gan");
    clf::CnnConfig critic_cfg = cfg.cnn;
    critic_cfg.input = emb ? clf::CnnInput::dense : clf::CnnInput::one_hot;
    critic_cfg.vocab_size = ctx.vocab.size();
    critic_cfg.proj_dim = emb ? gcfg.emb_dim : cfg.cnn.proj_dim;
    critic_cfg.bf_branch = false;  // gradients must flow through the main path
    Rng critic_rng(derive_seed(ctx.round_seed, "gan-critic-init"));
    clf::CnnModel critic = clf::CnnModel::init(critic_cfg, critic_rng);
    aug.trace = gan::gan_train(model, critic, a_chunks, emb ? &table : nullptr, gan_cfg);
    for (const auto& row : aug.trace)
      if (!std::isfinite(row.g_loss) || !std::isfinite(row.wasserstein))
        throw std::runtime_error("run_round: adversarial training diverged (non-finite loss)");
  }

  uint64_t aug_seed = derive_seed(ctx.round_seed, "augment");
  if (emb)
    aug.dense = gen::augment_dense(ctx.dataset, ctx.author, model, table, aug_seed,
                                   cfg.augment_factor, cfg.augment_cap);
  else
    aug.chunks = gen::augment(ctx.dataset, ctx.author, model, cfg.sampling, aug_seed,
                              cfg.augment_factor, cfg.augment_cap);
  return aug;
}

// ---- SVM arms ----

struct ArmPredictions {
  std::vector<bool> test_pred;  // aligned with ctx.test
};

ArmPredictions svm_arm(const RoundContext& ctx, const std::vector<Chunk>& extra_train) {
  std::vector<Chunk> train;
  std::vector<int> labels;
  for (const auto* c : ctx.train) {
    train.push_back(*c);
    labels.push_back(ctx.positive(*c) ? 1 : 0);
  }
  for (const auto& c : extra_train) {
    train.push_back(c);
    labels.push_back(0);  // forgeries are negatives
  }

  auto featurizer = clf::SvmFeaturizer::fit(train, labels, ctx.stopwords, ctx.tagger,
                                            ctx.cfg.chi2_keep);
  auto to_problem = [&](std::span<const Chunk> chunks, std::span<const int> ls) {
    clf::SvmProblem p;
    p.x = nn::Mat(static_cast<int64_t>(chunks.size()), featurizer.dim());
    for (size_t i = 0; i < chunks.size(); ++i) {
      auto f = featurizer.transform(chunks[i]);
      std::copy(f.begin(), f.end(), p.x.v.begin() + static_cast<int64_t>(i) * featurizer.dim());
      p.y.push_back(ls[i] ? 1 : -1);
    }
    return p;
  };

  clf::SvmProblem train_prob = to_problem(train, labels);
  std::vector<Chunk> val;
  std::vector<int> val_labels;
  for (const auto* c : ctx.validation) {
    val.push_back(*c);
    val_labels.push_back(ctx.positive(*c) ? 1 : 0);
  }
  clf::SvmProblem val_prob = to_problem(val, val_labels);

  auto grid_res = clf::svm_train(train_prob, val_prob);

  ArmPredictions out;
  out.test_pred.reserve(ctx.test.size());
  for (const auto* c : ctx.test) {
    auto f = featurizer.transform(*c);
    out.test_pred.push_back(grid_res.model.predict(f));
  }
  return out;
}

// ---- CNN arms ----

struct CnnRoundShared {
  style::BaseFeatureSpec bf_spec;  // fit once on the real training set
  gen::EmbeddingTable table;       // emb mode
  bool emb = false;
};

clf::CnnExample make_example(const RoundContext& ctx, const CnnRoundShared& shared,
                             const Chunk& c, bool positive) {
  clf::CnnExample ex;
  ex.positive = positive;
  std::vector<int64_t> ids;
  ids.reserve(c.tokens.size());
  for (const auto& t : c.tokens) ids.push_back(ctx.vocab.encode(t.surface));
  if (shared.emb) {
    ex.dense = shared.table.embed(ids);
  } else {
    ex.ids = std::move(ids);
    ex.bf = style::extract_base_features(c, shared.bf_spec);
  }
  return ex;
}

ArmPredictions cnn_arm(const RoundContext& ctx, const CnnRoundShared& shared,
                       const Augmentation* aug, const clf::CnnConfig& arm_cfg) {
  std::vector<clf::CnnExample> train;
  for (const auto* c : ctx.train) train.push_back(make_example(ctx, shared, *c, ctx.positive(*c)));
  if (aug) {
    for (const auto& c : aug->chunks) train.push_back(make_example(ctx, shared, c, false));
    for (const auto& m : aug->dense) {
      clf::CnnExample ex;
      ex.dense = m;
      ex.positive = false;
      train.push_back(std::move(ex));
    }
  }
  std::vector<clf::CnnExample> val;
  for (const auto* c : ctx.validation)
    val.push_back(make_example(ctx, shared, *c, ctx.positive(*c)));

  // Both arms share the same seed: identical initialization and training
  // streams, so the added data is the only difference.
  uint64_t arm_seed = derive_seed(ctx.round_seed, "cnn");
  auto res = clf::cnn_train(std::move(train), std::move(val), arm_cfg, ctx.cfg.recipe, arm_seed);

  ArmPredictions out;
  out.test_pred.reserve(ctx.test.size());
  for (const auto* c : ctx.test) {
    auto ex = make_example(ctx, shared, *c, ctx.positive(*c));
    out.test_pred.push_back(res.model.predict_positive(ex));
  }
  return out;
}

CnnRoundShared make_cnn_shared(const RoundContext& ctx) {
  CnnRoundShared shared;
  shared.emb = ctx.cfg.encoding == gen::Encoding::emb &&
               ctx.cfg.generator != GeneratorKind::ingested;
  if (shared.emb) {
    shared.table =
        gen::EmbeddingTable::gaussian(ctx.vocab.size(), ctx.cfg.gen_cfg.emb_dim, ctx.cfg.seed);
  } else {
    std::vector<Chunk> train_copy;
    for (const auto* c : ctx.train) train_copy.push_back(*c);
    shared.bf_spec = style::BaseFeatureSpec::fit(train_copy, ctx.stopwords, ctx.tagger);
  }
  return shared;
}

clf::CnnConfig make_cnn_config(const RoundContext& ctx, const CnnRoundShared& shared) {
  clf::CnnConfig cc = ctx.cfg.cnn;
  if (shared.emb) {
    cc.input = clf::CnnInput::dense;
    cc.proj_dim = ctx.cfg.gen_cfg.emb_dim;
    cc.bf_branch = false;
  } else {
    cc.input = clf::CnnInput::one_hot;
    cc.vocab_size = ctx.vocab.size();
    cc.bf_branch = true;  // plain text derivable for real, generated and ingested chunks
    cc.bf_dim = shared.bf_spec.dim();
  }
  return cc;
}

}  // namespace

RoundResult run_round(const Dataset& dataset, const std::string& author,
                      const ExperimentConfig& cfg) {
  RoundContext ctx = make_context(dataset, author, cfg);

  Augmentation aug = build_augmentation(ctx);

  ArmPredictions base_pred, aug_pred;
  if (cfg.classifier == ClassifierKind::svm) {
    base_pred = svm_arm(ctx, {});
    aug_pred = svm_arm(ctx, aug.chunks);
  } else {
    CnnRoundShared shared = make_cnn_shared(ctx);
    clf::CnnConfig arm_cfg = make_cnn_config(ctx, shared);
    base_pred = cnn_arm(ctx, shared, nullptr, arm_cfg);
    aug_pred = cnn_arm(ctx, shared, &aug, arm_cfg);
  }

  RoundResult res;
  res.author = author;
  res.augment_count = aug.count();
  res.gan_trace = std::move(aug.trace);

  eval::Confusion base_c, aug_c;
  std::vector<int> base_correct, aug_correct;
  for (size_t i = 0; i < ctx.test.size(); ++i) {
    const Chunk& c = *ctx.test[i];
    bool truth = ctx.positive(c);
    bool bp = base_pred.test_pred[i];
    bool ap = aug_pred.test_pred[i];
    auto tally = [truth](eval::Confusion& conf, bool pred) {
      if (pred && truth) ++conf.tp;
      else if (pred && !truth) ++conf.fp;
      else if (!pred && truth) ++conf.fn;
      else ++conf.tn;
    };
    tally(base_c, bp);
    tally(aug_c, ap);
    base_correct.push_back(bp == truth ? 1 : 0);
    aug_correct.push_back(ap == truth ? 1 : 0);
    res.outcomes.push_back({c.id, c.author, c.origin, truth, bp, ap});
  }

  res.baseline_f1 = eval::f1(base_c);
  res.baseline_k = eval::k_metric(base_c);
  res.aug_f1 = eval::f1(aug_c);
  res.aug_k = eval::k_metric(aug_c);
  res.df1_pct = eval::delta_pct(res.baseline_f1, res.aug_f1);
  res.dk_pct = eval::delta_pct(res.baseline_k, res.aug_k);
  res.mcnemar_p = eval::mcnemar(base_correct, aug_correct);
  res.significant = res.mcnemar_p < 0.05;
  return res;
}

Report run_experiment(const Dataset& dataset, const ExperimentConfig& cfg) {
  validate(cfg);
  if (dataset.authors.size() < 2)
    throw std::invalid_argument("run_experiment: need at least 2 authors");
  Report report;
  for (const auto& author : dataset.authors) {
    try {
      report.rounds.push_back(run_round(dataset, author, cfg));
    } catch (const std::exception& e) {
      throw std::runtime_error("round for author '" + author + "' failed: " + e.what());
    }
  }
  auto mean_of = [&](auto getter) {
    double s = 0.0;
    for (const auto& r : report.rounds) s += getter(r);
    return s / static_cast<double>(report.rounds.size());
  };
  report.macro_baseline_f1 = mean_of([](const RoundResult& r) { return r.baseline_f1; });
  report.macro_aug_f1 = mean_of([](const RoundResult& r) { return r.aug_f1; });
  report.macro_baseline_k = mean_of([](const RoundResult& r) { return r.baseline_k; });
  report.macro_aug_k = mean_of([](const RoundResult& r) { return r.aug_k; });
  report.macro_df1 = eval::delta_pct(report.macro_baseline_f1, report.macro_aug_f1);
  report.macro_dk = eval::delta_pct(report.macro_baseline_k, report.macro_aug_k);
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

void write_report_tsv(const std::string& path, const Report& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write " + path);
  out << "author\tbaseline_f1\taug_f1\tdF1_pct\tbaseline_k\taug_k\tdK_pct\tmcnemar_p\tsignificant\n";
  for (const auto& r : report.rounds) {
    out << r.author << '\t' << fmt(r.baseline_f1) << '\t' << fmt(r.aug_f1) << '\t'
        << fmt_opt(r.df1_pct) << '\t' << fmt(r.baseline_k) << '\t' << fmt(r.aug_k) << '\t'
        << fmt_opt(r.dk_pct) << '\t' << fmt(r.mcnemar_p) << '\t'
        << (r.significant ? "yes" : "no") << '\n';
  }
  out << "MACRO\t" << fmt(report.macro_baseline_f1) << '\t' << fmt(report.macro_aug_f1) << '\t'
      << fmt_opt(report.macro_df1) << '\t' << fmt(report.macro_baseline_k) << '\t'
      << fmt(report.macro_aug_k) << '\t' << fmt_opt(report.macro_dk) << "\tNA\tNA\n";
}

void write_manifest(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  out << "config_hash = " << buf << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "# resolved configuration\n";
  out << config_canonical(cfg);
}

void export_hidden_tsv(const std::string& path, const Dataset& dataset,
                       const std::string& author, const ExperimentConfig& cfg,
                       bool augmented_arm) {
  if (cfg.classifier != ClassifierKind::cnn)
    throw UsageError("export-hidden: only the cnn classifier has a hidden representation");
  RoundContext ctx = make_context(dataset, author, cfg);
  Augmentation aug;
  if (augmented_arm) aug = build_augmentation(ctx);

  CnnRoundShared shared = make_cnn_shared(ctx);
  clf::CnnConfig arm_cfg = make_cnn_config(ctx, shared);

  std::vector<clf::CnnExample> train;
  for (const auto* c : ctx.train) train.push_back(make_example(ctx, shared, *c, ctx.positive(*c)));
  if (augmented_arm) {
    for (const auto& c : aug.chunks) train.push_back(make_example(ctx, shared, c, false));
    for (const auto& m : aug.dense) {
      clf::CnnExample ex;
      ex.dense = m;
      train.push_back(std::move(ex));
    }
  }
  std::vector<clf::CnnExample> val;
  for (const auto* c : ctx.validation)
    val.push_back(make_example(ctx, shared, *c, ctx.positive(*c)));
  uint64_t arm_seed = derive_seed(ctx.round_seed, "cnn");
  auto trained = clf::cnn_train(train, val, arm_cfg, cfg.recipe, arm_seed);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("export-hidden: cannot write " + path);
  int64_t dim = arm_cfg.trunk_dim + (arm_cfg.bf_branch ? arm_cfg.bf_out : 0);
  out << "id\tauthor\tsplit\torigin";
  for (int64_t i = 1; i <= dim; ++i) out << "\tv_" << i;
  out << "\n";
  char buf[32];
  auto emit = [&](const std::string& id, const std::string& auth, Split split, Origin origin,
                  const clf::CnnExample& ex) {
    auto h = trained.model.hidden_representation(ex);
    out << id << '\t' << auth << '\t' << corpus::split_name(split) << '\t'
        << corpus::origin_name(origin);
    for (double v : h) {
      std::snprintf(buf, sizeof(buf), "%.8g", v);
      out << '\t' << buf;
    }
    out << '\n';
  };
  for (const auto& c : dataset.chunks)
    emit(c.id, c.author, c.split, c.origin, make_example(ctx, shared, c, ctx.positive(c)));
  for (const auto& c : aug.chunks)
    emit(c.id, c.author, c.split, c.origin, make_example(ctx, shared, c, false));
  for (size_t i = 0; i < aug.dense.size(); ++i) {
    clf::CnnExample ex;
    ex.dense = aug.dense[i];
    emit("gen-" + author + "-" + std::to_string(i), author, Split::train, Origin::generated, ex);
  }
}

}  // namespace av::harness
