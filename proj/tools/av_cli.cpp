// Authorship-verification toolkit CLI: corpus preparation, generator
// training, augmentation, classifier training, full experiments, and
// hidden-representation / t-SNE exports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "av/corpus.hpp"
#include "av/gan.hpp"
#include "av/generators.hpp"
#include "av/harness.hpp"
#include "av/rng.hpp"
#include "av/tsne.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using av::harness::ExperimentConfig;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
  bool seed_set = false;
};

ExperimentConfig resolve_config(const GlobalOpts& g) {
  ExperimentConfig cfg = g.config_path.empty() ? av::harness::default_config()
                                               : av::harness::load_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  return cfg;
}

av::corpus::Dataset load_dataset(const ExperimentConfig& cfg, const std::string& override_path) {
  std::string path = override_path.empty() ? cfg.dataset_path : override_path;
  if (path.empty()) throw av::harness::UsageError("no dataset given (flag --dataset or config)");
  auto docs = av::corpus::read_corpus_jsonl(path);
  av::corpus::FilterOptions opt{cfg.chunk_size, cfg.min_tail_words, cfg.min_author_chunks};
  return av::corpus::filter_and_split(docs, cfg.ratios, cfg.seed, opt);
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir);
}

int run_prepare(const GlobalOpts& g, const std::string& input, const std::string& synthetic) {
  ExperimentConfig cfg = resolve_config(g);
  ensure_out_dir(g.out_dir);
  av::corpus::Dataset ds;
  if (!synthetic.empty()) {
    auto x = synthetic.find('x');
    if (x == std::string::npos)
      throw av::harness::UsageError("--synthetic expects AUTHORSxCHUNKS, e.g. 5x100");
    int n_authors = std::stoi(synthetic.substr(0, x));
    int per_author = std::stoi(synthetic.substr(x + 1));
    ds = av::corpus::make_synthetic_corpus(n_authors, per_author, cfg.seed, cfg.chunk_size);
  } else if (!input.empty()) {
    ds = load_dataset(cfg, input);
  } else {
    throw av::harness::UsageError("prepare: need --input or --synthetic");
  }
  std::string out = g.out_dir + "/dataset.jsonl";
  av::corpus::write_dataset_jsonl(out, ds);
  std::cout << "dataset: " << out << "\n";
  std::cout << "authors: " << ds.authors.size() << "\n";
  for (auto s : {av::corpus::Split::train, av::corpus::Split::validation, av::corpus::Split::test})
    std::cout << av::corpus::split_name(s) << " chunks: " << ds.split_of(s).size() << "\n";
  return 0;
}

int run_train_generator(const GlobalOpts& g, const std::string& dataset_path,
                        const std::string& author, const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(g);
  av::harness::validate(cfg);
  if (cfg.generator == av::harness::GeneratorKind::ingested)
    throw av::harness::UsageError("train-generator: generator=ingested has nothing to train");
  auto ds = load_dataset(cfg, dataset_path);
  auto train = ds.split_of(av::corpus::Split::train);
  std::vector<av::corpus::Chunk> train_chunks;
  for (const auto* c : train) train_chunks.push_back(*c);
  auto vocab = av::corpus::build_vocabulary(train_chunks, cfg.vocab_min_freq);

  std::vector<av::corpus::Chunk> author_chunks;
  for (const auto* c : train)
    if (c->author == author) author_chunks.push_back(*c);
  if (author_chunks.empty())
    throw std::runtime_error("train-generator: author '" + author + "' has no training chunks");

  av::gen::GeneratorConfig gcfg = cfg.gen_cfg;
  gcfg.arch = cfg.generator == av::harness::GeneratorKind::gru ? av::gen::Arch::gru
                                                               : av::gen::Arch::tra;
  gcfg.encoding = cfg.encoding;
  uint64_t round_seed = av::derive_seed(cfg.seed, "round:" + author);
  uint64_t gen_seed = av::derive_seed(round_seed, "generator");
  auto model = av::gen::GeneratorModel::init(gcfg, vocab, gen_seed);

  if (cfg.training == av::harness::TrainingKind::lmtr) {
    if (cfg.encoding == av::gen::Encoding::emb) {
      auto table = av::gen::EmbeddingTable::gaussian(vocab.size(), gcfg.emb_dim, cfg.seed);
      auto res = av::gen::lm_train_emb(model, author_chunks, table, cfg.lm, gen_seed);
      std::cout << "final loss: " << res.epoch_loss.back() << "\n";
    } else {
      auto res = av::gen::lm_train(model, author_chunks, cfg.lm, gen_seed);
      std::cout << "final loss: " << res.epoch_loss.back() << "\n";
    }
  } else {
    av::gan::GanConfig gan_cfg = cfg.gan;
    gan_cfg.seed = av::derive_seed(round_seed, "gan");
    av::clf::CnnConfig critic_cfg = cfg.cnn;
    bool emb = cfg.encoding == av::gen::Encoding::emb;
    critic_cfg.input = emb ? av::clf::CnnInput::dense : av::clf::CnnInput::one_hot;
    critic_cfg.vocab_size = vocab.size();
    critic_cfg.proj_dim = emb ? gcfg.emb_dim : cfg.cnn.proj_dim;
    critic_cfg.bf_branch = false;
    av::Rng critic_rng(av::derive_seed(round_seed, "gan-critic-init"));
    auto critic = av::clf::CnnModel::init(critic_cfg, critic_rng);
    av::gen::EmbeddingTable table;
    if (emb) table = av::gen::EmbeddingTable::gaussian(vocab.size(), gcfg.emb_dim, cfg.seed);
    auto trace = av::gan::gan_train(model, critic, author_chunks, emb ? &table : nullptr, gan_cfg);
    ensure_out_dir(g.out_dir);
    av::gan::write_trace_tsv(g.out_dir + "/gan_trace_" + author + ".tsv", trace);
  }
  model.save(out_path, cfg.seed);
  std::cout << "generator checkpoint: " << out_path << "\n";
  return 0;
}

int run_augment(const GlobalOpts& g, const std::string& dataset_path, const std::string& author,
                const std::string& model_path, const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(g);
  auto ds = load_dataset(cfg, dataset_path);
  auto model = av::gen::GeneratorModel::load(model_path);
  if (model.config().encoding != av::gen::Encoding::one_hot)
    throw av::harness::UsageError(
        "augment: emb-mode generators emit dense vectors with no text form; "
        "run the full pipeline instead");
  uint64_t aug_seed = av::derive_seed(av::derive_seed(cfg.seed, "round:" + author), "augment");
  auto chunks = av::gen::augment(ds, author, model, cfg.sampling, aug_seed, cfg.augment_factor,
                                 cfg.augment_cap);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("augment: cannot write " + out_path);
  for (const auto& c : chunks) {
    nlohmann::json j{{"text", c.text()}};
    out << j.dump() << "\n";
  }
  std::cout << "generated " << chunks.size() << " chunks -> " << out_path << "\n";
  return 0;
}

int run_train_classifier(const GlobalOpts& g, const std::string& dataset_path,
                         const std::string& author) {
  ExperimentConfig cfg = resolve_config(g);
  auto ds = load_dataset(cfg, dataset_path);
  auto round = av::harness::run_round(ds, author, cfg);
  std::cout << "author: " << round.author << "\n";
  std::cout << "baseline F1 " << round.baseline_f1 << " K " << round.baseline_k << "\n";
  std::cout << "augmented F1 " << round.aug_f1 << " K " << round.aug_k << "\n";
  std::cout << "mcnemar p " << round.mcnemar_p << (round.significant ? " (significant)" : "")
            << "\n";
  return 0;
}

int run_full(const GlobalOpts& g, const std::string& dataset_path) {
  ExperimentConfig cfg = resolve_config(g);
  av::harness::validate(cfg);
  ensure_out_dir(g.out_dir);
  auto ds = load_dataset(cfg, dataset_path);
  auto report = av::harness::run_experiment(ds, cfg);
  av::harness::write_report_tsv(g.out_dir + "/report.tsv", report);
  av::harness::write_manifest(g.out_dir + "/manifest.txt", cfg);
  for (const auto& r : report.rounds)
    if (!r.gan_trace.empty())
      av::gan::write_trace_tsv(g.out_dir + "/gan_trace_" + r.author + ".tsv", r.gan_trace);
  std::cout << "report: " << g.out_dir << "/report.tsv\n";
  return 0;
}

int run_export_hidden(const GlobalOpts& g, const std::string& dataset_path,
                      const std::string& author, const std::string& out_path, bool augmented) {
  ExperimentConfig cfg = resolve_config(g);
  auto ds = load_dataset(cfg, dataset_path);
  av::harness::export_hidden_tsv(out_path, ds, author, cfg, augmented);
  std::cout << "hidden representations: " << out_path << "\n";
  return 0;
}

int run_tsne(const GlobalOpts& g, const std::string& input, const std::string& out_path,
             double perplexity, int iters) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("tsne: cannot open " + input);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("tsne: empty input " + input);
  std::vector<std::string> ids, authors, origins;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, author, split, origin, cell;
    std::getline(ls, id, '\t');
    std::getline(ls, author, '\t');
    std::getline(ls, split, '\t');
    std::getline(ls, origin, '\t');
    std::vector<double> v;
    while (std::getline(ls, cell, '\t')) v.push_back(std::stod(cell));
    if (v.empty()) throw std::runtime_error("tsne: row without coordinates in " + input);
    ids.push_back(id);
    authors.push_back(author);
    origins.push_back(origin);
    rows.push_back(std::move(v));
  }
  av::nn::Mat points(static_cast<int64_t>(rows.size()),
                     static_cast<int64_t>(rows.empty() ? 0 : rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), points.v.begin() + static_cast<int64_t>(i) * points.cols);

  av::eval::TsneConfig tc;
  tc.perplexity = perplexity;
  tc.iters = iters;
  tc.seed = g.seed;
  auto res = av::eval::tsne(points, tc);

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("tsne: cannot write " + out_path);
  out << "id\tauthor\torigin\tx\ty\n";
  for (size_t i = 0; i < ids.size(); ++i)
    out << ids[i] << '\t' << authors[i] << '\t' << origins[i] << '\t'
        << res.y.at(static_cast<int64_t>(i), 0) << '\t' << res.y.at(static_cast<int64_t>(i), 1)
        << '\n';
  std::cout << "t-SNE coordinates: " << out_path << " (KL " << res.kl_initial << " -> "
            << res.kl_final << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"authorship verification with synthetic forgeries"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts g;
  app.add_option("--config", g.config_path, "experiment config file");
  app.add_option("--out-dir", g.out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", g.seed, "override the config seed");

  std::string input, synthetic, dataset_path, author, model_path, out_path;
  bool augmented = false;
  double perplexity = 30.0;
  int iters = 1000;

  auto* prepare = app.add_subcommand("prepare", "ingest or synthesize a corpus");
  prepare->add_option("--input", input, "corpus JSON-lines file");
  prepare->add_option("--synthetic", synthetic, "AUTHORSxCHUNKS synthetic corpus, e.g. 5x100");

  auto* traing = app.add_subcommand("train-generator", "train one author's generator");
  traing->add_option("--dataset", dataset_path, "dataset JSON-lines file");
  traing->add_option("--author", author, "target author")->required();
  traing->add_option("--out", out_path, "checkpoint path")->required();

  auto* aug = app.add_subcommand("augment", "emit generated chunks as JSON-lines");
  aug->add_option("--dataset", dataset_path, "dataset JSON-lines file");
  aug->add_option("--author", author, "target author")->required();
  aug->add_option("--model", model_path, "generator checkpoint")->required();
  aug->add_option("--out", out_path, "output JSON-lines file")->required();

  auto* trainc = app.add_subcommand("train-classifier", "train and evaluate one round");
  trainc->add_option("--dataset", dataset_path, "dataset JSON-lines file");
  trainc->add_option("--author", author, "target author")->required();

  auto* full = app.add_subcommand("run", "full experiment: one round per author");
  full->add_option("--dataset", dataset_path, "dataset JSON-lines file");

  auto* hidden = app.add_subcommand("export-hidden", "hidden-representation TSV export");
  hidden->add_option("--dataset", dataset_path, "dataset JSON-lines file");
  hidden->add_option("--author", author, "target author")->required();
  hidden->add_option("--out", out_path, "output TSV")->required();
  hidden->add_flag("--augmented", augmented, "train the augmented arm instead of the baseline");

  auto* tsne_cmd = app.add_subcommand("tsne", "2-D t-SNE of a hidden-representation TSV");
  tsne_cmd->add_option("--input", out_path, "hidden-representation TSV")->required();
  tsne_cmd->add_option("--out", model_path, "output TSV")->required();
  tsne_cmd->add_option("--perplexity", perplexity, "target perplexity");
  tsne_cmd->add_option("--iters", iters, "gradient-descent iterations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (prepare->parsed()) return run_prepare(g, input, synthetic);
    if (traing->parsed()) return run_train_generator(g, dataset_path, author, out_path);
    if (aug->parsed()) return run_augment(g, dataset_path, author, model_path, out_path);
    if (trainc->parsed()) return run_train_classifier(g, dataset_path, author);
    if (full->parsed()) return run_full(g, dataset_path);
    if (hidden->parsed()) return run_export_hidden(g, dataset_path, author, out_path, augmented);
    if (tsne_cmd->parsed()) return run_tsne(g, out_path, model_path, perplexity, iters);
  } catch (const av::harness::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
