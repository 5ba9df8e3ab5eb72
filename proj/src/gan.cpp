#include "av/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "av/optim.hpp"

namespace av::gan {

using namespace av::nn;

void write_trace_tsv(const std::string& path, const GanTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("gan trace: cannot write " + path);
  out << "epoch\twasserstein_estimate\tgp_term\tg_loss\n";
  char buf[32];
  for (const auto& row : trace) {
    out << row.epoch;
    for (double v : {row.wasserstein, row.gp, row.g_loss}) {
      std::snprintf(buf, sizeof(buf), "%.10g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

Tensor gradient_penalty(const CriticFn& critic, std::span<const Mat> real,
                        std::span<const Mat> fake, Rng& rng) {
  if (real.size() != fake.size() || real.empty())
    throw std::invalid_argument("gradient_penalty: real/fake batches must match");
  Tensor total = Tensor::scalar(0.0);
  for (size_t i = 0; i < real.size(); ++i) {
    const Mat& r = real[i];
    const Mat& f = fake[i];
    if (r.rows != f.rows || r.cols != f.cols)
      throw std::invalid_argument("gradient_penalty: sample shape mismatch");
    double eps = rng.uniform();
    std::vector<double> mix(r.v.size());
    for (size_t j = 0; j < mix.size(); ++j) mix[j] = eps * r.v[j] + (1.0 - eps) * f.v[j];
    Tensor x_hat = Tensor::param(r.rows, r.cols, std::move(mix));
    Tensor score = critic(x_hat);
    Tensor g = grad(score, std::vector<Tensor>{x_hat}, /*create_graph=*/true)[0];
    Tensor norm = sqrt_act(sum_all(mul(g, g)));
    Tensor dev = sub(norm, Tensor::scalar(1.0));
    total = add(total, mul(dev, dev));
  }
  return scale(total, 1.0 / static_cast<double>(real.size()));
}

namespace {

double mean_critic_value(const CriticFn& critic, std::span<const Mat> pool) {
  NoGrad ng;
  double sum = 0.0;
  for (const auto& m : pool) sum += critic(Tensor::from(m)).item();
  return pool.empty() ? 0.0 : sum / static_cast<double>(pool.size());
}

Tensor mean_critic_graph(const CriticFn& critic, std::span<const Mat> batch) {
  std::vector<Tensor> scores;
  scores.reserve(batch.size());
  for (const auto& m : batch) scores.push_back(critic(Tensor::from(m)));
  return mean_all(concat_rows(scores));
}

}  // namespace

GanTrace gan_train_core(GanParticipants& parts, std::span<const Mat> real,
                        const GanConfig& cfg) {
  if (real.empty()) throw std::invalid_argument("gan_train: empty real pool");
  if (cfg.epochs < 0) throw std::invalid_argument("gan_train: negative epoch count");

  Adam gen_opt(parts.generator_params,
               {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});
  Adam critic_opt(parts.critic_params,
                  {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});
  Rng gen_rng(derive_seed(cfg.seed, "gan-generator"));
  Rng critic_rng(derive_seed(cfg.seed, "gan-critic"));
  Rng gp_rng(derive_seed(cfg.seed, "gan-gp"));

  auto zero_all = [&]() {
    gen_opt.zero_grad();
    critic_opt.zero_grad();
  };

  GanTrace trace;
  trace.reserve(static_cast<size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Generator step on a fresh fake batch.
    int n_fake = std::min<int>(cfg.batch, static_cast<int>(real.size()));
    auto fakes = parts.sample_fakes(n_fake, gen_rng);
    std::vector<Tensor> fake_scores;
    fake_scores.reserve(fakes.size());
    for (const auto& f : fakes) fake_scores.push_back(parts.critic_score(f));
    Tensor g_loss = neg(mean_all(concat_rows(fake_scores)));
    zero_all();
    backward(g_loss);
    gen_opt.step();
    double g_loss_val = g_loss.item();

    // Detached fake pool for the critic passes; regenerated from the updated
    // generator so the critic always sees current samples.
    auto pool_fakes = parts.sample_fakes(n_fake, gen_rng);
    std::vector<Mat> fake_pool;
    fake_pool.reserve(pool_fakes.size());
    for (const auto& f : pool_fakes) fake_pool.push_back(f.to_mat());

    double gp_sum = 0.0;
    int gp_steps = 0;
    for (int de = 0; de < cfg.d_epochs_per_step; ++de) {
      std::vector<size_t> order(real.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      critic_rng.shuffle(order);
      for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
        size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
        std::vector<Mat> real_mb, fake_mb;
        for (size_t k = start; k < end; ++k) {
          real_mb.push_back(real[order[k]]);
          fake_mb.push_back(fake_pool[static_cast<size_t>(
              critic_rng.uniform_int(static_cast<int64_t>(fake_pool.size())))]);
        }
        Tensor gp = gradient_penalty(parts.critic_score, real_mb, fake_mb, gp_rng);
        Tensor loss = add(sub(mean_critic_graph(parts.critic_score, fake_mb),
                              mean_critic_graph(parts.critic_score, real_mb)),
                          scale(gp, cfg.lambda_gp));
        zero_all();
        backward(loss);
        critic_opt.step();
        gp_sum += gp.item();
        ++gp_steps;
      }
    }

    GanTraceRow row;
    row.epoch = epoch;
    row.g_loss = g_loss_val;
    row.gp = gp_steps ? gp_sum / gp_steps : 0.0;
    row.wasserstein = mean_critic_value(parts.critic_score, real) -
                      mean_critic_value(parts.critic_score, fake_pool);
    trace.push_back(row);
  }
  return trace;
}

namespace {

// One differentiable fake text sample: a real prompt followed by
// straight-through Gumbel rows (one-hot mode) or raw output rows (emb mode).
Tensor sample_fake_text(const gen::GeneratorModel& g, const gen::EmbeddingTable* table,
                        std::span<const corpus::Chunk> real_chunks, double tau, Rng& rng) {
  const auto& cfg = g.config();
  const corpus::Chunk& src =
      *std::next(real_chunks.begin(), rng.uniform_int(static_cast<int64_t>(real_chunks.size())));
  int64_t length = static_cast<int64_t>(src.tokens.size());
  size_t plen = std::min<size_t>(static_cast<size_t>(cfg.min_prefix), src.tokens.size());
  std::vector<int64_t> prompt_ids;
  for (size_t i = 0; i < plen; ++i)
    prompt_ids.push_back(g.vocab().encode(src.tokens[i].surface));

  const bool one_hot = cfg.encoding == gen::Encoding::one_hot;
  const int64_t V = g.vocab().size();

  std::vector<Tensor> out_rows;   // rows fed to the critic
  std::vector<Tensor> in_rows;    // embedded inputs consumed so far
  for (size_t i = 0; i < plen; ++i) {
    if (one_hot) {
      std::vector<double> oh(static_cast<size_t>(V), 0.0);
      oh[static_cast<size_t>(prompt_ids[i])] = 1.0;
      out_rows.push_back(Tensor::from(1, V, std::move(oh)));
      in_rows.push_back(g.embed_ids(std::span<const int64_t>(&prompt_ids[i], 1)));
    } else {
      std::vector<int64_t> one{prompt_ids[i]};
      Tensor row = Tensor::from(table->embed(one));
      out_rows.push_back(row);
      in_rows.push_back(row);
    }
  }

  const bool incremental = cfg.arch == gen::Arch::gru;
  auto state = g.fresh_state();
  Tensor last;
  if (incremental)
    for (const auto& x : in_rows) last = g.step(x, state);

  while (static_cast<int64_t>(out_rows.size()) < length) {
    Tensor logits_or_vec;
    if (incremental) {
      logits_or_vec = last;
    } else {
      Tensor rows = g.forward_rows(concat_rows(in_rows));
      logits_or_vec = slice_rows(rows, rows.rows() - 1, rows.rows());
    }
    Tensor out_row, next_in;
    if (one_hot) {
      Tensor y = gumbel_softmax(logits_or_vec, tau, /*hard=*/true, rng);
      out_row = y;
      next_in = matmul(y, g.input_projection());
    } else {
      out_row = logits_or_vec;
      next_in = logits_or_vec;
    }
    out_rows.push_back(out_row);
    if (static_cast<int64_t>(out_rows.size()) < length) {
      in_rows.push_back(next_in);
      if (incremental) last = g.step(next_in, state);
    }
  }
  return concat_rows(out_rows);
}

}  // namespace

GanTrace gan_train(gen::GeneratorModel& generator, clf::CnnModel& critic,
                   std::span<const corpus::Chunk> real_chunks,
                   const gen::EmbeddingTable* table, const GanConfig& cfg) {
  if (real_chunks.empty()) throw std::invalid_argument("gan_train: no real chunks");
  const bool one_hot = generator.config().encoding == gen::Encoding::one_hot;
  if (!one_hot && table == nullptr)
    throw std::invalid_argument("gan_train: emb mode requires an embedding table");
  if (one_hot != (critic.config().input == clf::CnnInput::one_hot))
    throw std::invalid_argument("gan_train: generator and critic modalities differ");
  if (one_hot && critic.config().vocab_size != generator.vocab().size())
    throw std::invalid_argument("gan_train: critic vocabulary does not match the generator");

  // Real pool in the critic's input representation.
  std::vector<Mat> real_pool;
  real_pool.reserve(real_chunks.size());
  const int64_t V = generator.vocab().size();
  for (const auto& c : real_chunks) {
    std::vector<int64_t> ids;
    ids.reserve(c.tokens.size());
    for (const auto& t : c.tokens) ids.push_back(generator.vocab().encode(t.surface));
    if (one_hot) {
      Mat m(static_cast<int64_t>(ids.size()), V);
      for (size_t i = 0; i < ids.size(); ++i) m.at(static_cast<int64_t>(i), ids[i]) = 1.0;
      real_pool.push_back(std::move(m));
    } else {
      real_pool.push_back(table->embed(ids));
    }
  }

  GanParticipants parts;
  parts.generator_params = generator.params();
  parts.critic_params = critic.params();
  parts.critic_score = [&critic, one_hot](const Tensor& x) {
    return one_hot ? critic.score_soft_onehot(x, false, nullptr)
                   : critic.score_dense(x, nullptr, false, nullptr);
  };
  parts.sample_fakes = [&generator, table, real_chunks, &cfg](int n, Rng& rng) {
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      out.push_back(sample_fake_text(generator, table, real_chunks, cfg.gumbel_tau, rng));
    return out;
  };
  return gan_train_core(parts, real_pool, cfg);
}

}  // namespace av::gan
