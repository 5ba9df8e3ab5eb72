#pragma once

#include <functional>
#include <span>
#include <vector>

#include "av/cnn.hpp"
#include "av/corpus.hpp"
#include "av/generators.hpp"
#include "av/rng.hpp"
#include "av/tensor.hpp"

namespace av::gan {

struct GanConfig {
  int epochs = 500;
  int d_epochs_per_step = 5;  // critic passes over the real∪fake pool per epoch
  double lambda_gp = 10.0;
  double lr = 0.0001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch = 32;
  double gumbel_tau = 1.0;
  uint64_t seed = 0;
};

struct GanTraceRow {
  int epoch = 0;
  double wasserstein = 0.0;  // E[D(real)] - E[D(fake)] over the pools
  double gp = 0.0;           // mean penalty (before lambda) across critic steps
  double g_loss = 0.0;
};
using GanTrace = std::vector<GanTraceRow>;

void write_trace_tsv(const std::string& path, const GanTrace& trace);

using CriticFn = std::function<nn::Tensor(const nn::Tensor&)>;

// Mean over the batch of (||∇_x critic(x̂)|| - 1)² at per-sample random
// interpolates x̂ = ε·real + (1-ε)·fake. Differentiable w.r.t. the critic
// parameters (the inner gradient is built with create_graph).
nn::Tensor gradient_penalty(const CriticFn& critic, std::span<const nn::Mat> real,
                            std::span<const nn::Mat> fake, Rng& rng);

// Generic WGAN-GP participants; the text pipeline and sanity tasks share the
// same loop.
struct GanParticipants {
  CriticFn critic_score;
  // n differentiable fake samples with the generator graph attached.
  std::function<std::vector<nn::Tensor>(int n, Rng&)> sample_fakes;
  std::vector<nn::Tensor> generator_params;
  std::vector<nn::Tensor> critic_params;
};

GanTrace gan_train_core(GanParticipants& parts, std::span<const nn::Mat> real,
                        const GanConfig& cfg);

// Adversarial training of a text generator against a CNN critic. One-hot
// generators feed straight-through Gumbel samples into the critic's one-hot
// path; emb generators feed dense rows. `table` is required in emb mode.
GanTrace gan_train(gen::GeneratorModel& generator, clf::CnnModel& critic,
                   std::span<const corpus::Chunk> real_chunks,
                   const gen::EmbeddingTable* table, const GanConfig& cfg);

}  // namespace av::gan
