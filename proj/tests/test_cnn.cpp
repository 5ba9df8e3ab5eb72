#include <cmath>

#include "av/cnn.hpp"
#include "av/corpus.hpp"
#include "av/rng.hpp"
#include "doctest.h"

using namespace av::clf;
using av::Rng;

namespace {

CnnConfig tiny_config(int64_t vocab) {
  CnnConfig cfg;
  cfg.input = CnnInput::one_hot;
  cfg.vocab_size = vocab;
  cfg.proj_dim = 8;
  cfg.conv_w1 = 12;
  cfg.conv_w2 = 8;
  cfg.trunk_dim = 8;
  cfg.dropout = 0.1;
  return cfg;
}

// Two easily separated token populations.
CnnExample toy_example(bool positive, int len, Rng& rng, int64_t vocab) {
  CnnExample ex;
  ex.positive = positive;
  for (int i = 0; i < len; ++i) {
    int64_t lo = positive ? 0 : vocab / 2;
    ex.ids.push_back(lo + rng.uniform_int(vocab / 2));
  }
  return ex;
}

std::vector<CnnExample> toy_set(int n, int len, uint64_t seed, int64_t vocab) {
  Rng rng(seed);
  std::vector<CnnExample> out;
  for (int i = 0; i < n; ++i) out.push_back(toy_example(i % 2 == 0, len, rng, vocab));
  return out;
}

}  // namespace

TEST_CASE("positive-class weight is the negative-to-positive ratio") {
  std::vector<CnnExample> ex;
  for (int i = 0; i < 75; ++i) ex.push_back({{}, {}, {}, false});
  for (int i = 0; i < 25; ++i) ex.push_back({{}, {}, {}, true});
  CHECK(compute_pos_weight(ex) == doctest::Approx(3.0));
}

TEST_CASE("training requires both classes and a validation set") {
  auto cfg = tiny_config(16);
  TrainRecipe recipe;
  recipe.min_epochs = 1;
  recipe.max_epochs = 1;
  std::vector<CnnExample> pos_only = toy_set(4, 10, 1, 16);
  for (auto& e : pos_only) e.positive = true;
  std::vector<CnnExample> val = toy_set(2, 10, 2, 16);
  CHECK_THROWS_AS(cnn_train(pos_only, val, cfg, recipe, 3), std::invalid_argument);
  CHECK_THROWS_AS(cnn_train(toy_set(4, 10, 1, 16), {}, cfg, recipe, 3), std::invalid_argument);
}

TEST_CASE("a memorizable toy set reaches perfect training f1") {
  const int64_t vocab = 16;
  auto train = toy_set(40, 12, 5, vocab);
  auto cfg = tiny_config(vocab);
  TrainRecipe recipe;
  recipe.min_epochs = 5;
  recipe.max_epochs = 200;
  recipe.patience = 10;
  recipe.batch = 8;
  recipe.finetune_epochs = 0;
  // validation = training set: validation F1 tracks memorization
  auto res = cnn_train(train, train, cfg, recipe, 7);
  double best = 0.0;
  for (double f : res.val_f1) best = std::max(best, f);
  CHECK(best == doctest::Approx(1.0));
  CHECK(res.stopped_epoch <= 200);
}

TEST_CASE("constant validation f1 stops training at min plus patience") {
  const int64_t vocab = 12;
  auto train = toy_set(4, 10, 9, vocab);
  auto val = toy_set(2, 10, 10, vocab);
  auto cfg = tiny_config(vocab);
  TrainRecipe recipe;
  recipe.min_epochs = 50;
  recipe.max_epochs = 500;
  recipe.patience = 25;
  recipe.batch = 4;
  recipe.finetune_epochs = 0;
  recipe.val_f1_hook = [](int, double) { return 0.5; };
  auto res = cnn_train(train, val, cfg, recipe, 11);
  CHECK(res.stopped_epoch == 75);
}

TEST_CASE("early stopping respects the minimum and maximum epoch bounds") {
  const int64_t vocab = 12;
  auto train = toy_set(4, 10, 13, vocab);
  auto val = toy_set(2, 10, 14, vocab);
  auto cfg = tiny_config(vocab);

  TrainRecipe recipe;
  recipe.min_epochs = 10;
  recipe.max_epochs = 500;
  recipe.patience = 5;
  recipe.batch = 4;
  recipe.finetune_epochs = 0;
  // improvement at epoch 20, plateau afterwards: stop at 25
  recipe.val_f1_hook = [](int epoch, double) { return epoch <= 20 ? epoch * 0.01 : 0.0; };
  auto res = cnn_train(train, val, cfg, recipe, 15);
  CHECK(res.stopped_epoch == 25);

  // an ever-improving metric runs to the maximum
  recipe.min_epochs = 2;
  recipe.max_epochs = 12;
  recipe.patience = 25;
  recipe.val_f1_hook = [](int epoch, double) { return epoch * 0.001; };
  auto res2 = cnn_train(train, val, cfg, recipe, 15);
  CHECK(res2.stopped_epoch == 12);
}

TEST_CASE("evaluation is deterministic with scores strictly inside (0,1)") {
  const int64_t vocab = 16;
  auto train = toy_set(8, 12, 17, vocab);
  auto val = toy_set(4, 12, 18, vocab);
  auto cfg = tiny_config(vocab);
  TrainRecipe recipe;
  recipe.min_epochs = 2;
  recipe.max_epochs = 4;
  recipe.patience = 2;
  recipe.batch = 4;
  recipe.finetune_epochs = 1;
  auto res = cnn_train(train, val, cfg, recipe, 19);
  CnnExample probe = toy_set(1, 12, 20, vocab)[0];
  double s1 = res.model.predict_score(probe);
  double s2 = res.model.predict_score(probe);
  CHECK(s1 == s2);
  CHECK(s1 > 0.0);
  CHECK(s1 < 1.0);
}

TEST_CASE("sequences shorter than the wide kernel are rejected") {
  Rng rng(21);
  auto cfg = tiny_config(16);
  auto model = CnnModel::init(cfg, rng);
  CnnExample ex;
  ex.ids = {1, 2, 3, 4};  // shorter than kernel 5
  CHECK_THROWS_WITH_AS(model.score(ex, false, nullptr), doctest::Contains("too short"),
                       std::invalid_argument);
}

TEST_CASE("hidden representation is 64-dim without the bf branch and 128 with it") {
  Rng rng(23);
  CnnConfig plain;  // paper-default widths
  plain.input = CnnInput::one_hot;
  plain.vocab_size = 30;
  auto model = CnnModel::init(plain, rng);
  CnnExample ex;
  for (int i = 0; i < 12; ++i) ex.ids.push_back(i % 30);
  CHECK(model.hidden_representation(ex).size() == 64);

  CnnConfig with_bf = plain;
  with_bf.bf_branch = true;
  with_bf.bf_dim = 20;
  auto model2 = CnnModel::init(with_bf, rng);
  ex.bf.assign(20, 0.1);
  CHECK(model2.hidden_representation(ex).size() == 128);
}

TEST_CASE("all-zero weights give an all-zero hidden representation") {
  Rng rng(25);
  auto cfg = tiny_config(16);
  auto model = CnnModel::init(cfg, rng);
  for (auto& p : model.params())
    p.set_values(std::vector<double>(static_cast<size_t>(p.size()), 0.0));
  CnnExample ex;
  for (int i = 0; i < 12; ++i) ex.ids.push_back(i % 16);
  for (double v : model.hidden_representation(ex)) CHECK(v == 0.0);
}

TEST_CASE("training loss drops over the first ten epochs") {
  const int64_t vocab = 16;
  auto train = toy_set(24, 12, 27, vocab);
  auto val = toy_set(8, 12, 28, vocab);
  auto cfg = tiny_config(vocab);
  TrainRecipe recipe;
  recipe.min_epochs = 10;
  recipe.max_epochs = 10;
  recipe.patience = 10;
  recipe.batch = 8;
  recipe.finetune_epochs = 0;
  auto res = cnn_train(train, val, cfg, recipe, 29);
  REQUIRE(res.train_loss.size() == 10);
  CHECK(res.train_loss[9] < res.train_loss[0]);
}

TEST_CASE("cnn checkpoints restore the model exactly") {
  const int64_t vocab = 16;
  auto train = toy_set(8, 12, 31, vocab);
  auto val = toy_set(4, 12, 32, vocab);
  auto cfg = tiny_config(vocab);
  TrainRecipe recipe;
  recipe.min_epochs = 2;
  recipe.max_epochs = 3;
  recipe.patience = 2;
  recipe.batch = 4;
  recipe.finetune_epochs = 0;
  auto res = cnn_train(train, val, cfg, recipe, 33);
  res.model.save("cnn_ckpt.txt", 33);
  auto loaded = CnnModel::load("cnn_ckpt.txt");
  CnnExample probe = toy_set(1, 12, 34, vocab)[0];
  CHECK(res.model.predict_score(probe) == doctest::Approx(loaded.predict_score(probe)).epsilon(1e-15));
}
