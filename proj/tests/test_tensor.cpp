#include <cmath>
#include <vector>

#include "av/checkpoint.hpp"
#include "av/layers.hpp"
#include "av/optim.hpp"
#include "av/rng.hpp"
#include "av/tensor.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace av::nn;
using av::Rng;

namespace {

Tensor random_param(int64_t r, int64_t c, Rng& rng, const std::string& name) {
  std::vector<double> v(static_cast<size_t>(r * c));
  for (auto& x : v) x = rng.normal();
  return Tensor::param(r, c, std::move(v), name);
}

}  // namespace

TEST_CASE("square function gradient") {
  Tensor x = Tensor::param(1, 1, {3.0}, "x");
  Tensor y = mul(x, x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("dead relu has zero gradient") {
  Tensor x = Tensor::param(1, 1, {-2.0}, "x");
  Tensor y = scale(relu(x), 5.0);
  backward(y);
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::param(1, 2, {1.0, 2.0}, "x");
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("grad accumulates across repeated backward calls") {
  Tensor x = Tensor::param(1, 1, {3.0}, "x");
  Tensor y = mul(x, x);
  backward(y);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(12.0));
  x.zero_grad();
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("detach blocks gradient flow") {
  Tensor x = Tensor::param(1, 1, {3.0}, "x");
  Tensor y = mul(x.detach(), x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(3.0));
}

TEST_CASE("three-layer MLP matches finite differences") {
  Rng rng(11);
  Tensor W1 = random_param(4, 8, rng, "W1");
  Tensor b1 = random_param(1, 8, rng, "b1");
  Tensor W2 = random_param(8, 6, rng, "W2");
  Tensor b2 = random_param(1, 6, rng, "b2");
  Tensor W3 = random_param(6, 1, rng, "W3");
  Tensor x = Tensor::from(2, 4, {0.3, -0.7, 1.1, 0.2, -0.4, 0.9, -1.2, 0.5});

  auto forward = [&]() {
    Tensor h1 = tanh_act(add(matmul(x, W1), b1));
    Tensor h2 = relu(add(matmul(h1, W2), b2));
    Tensor out = matmul(h2, W3);
    return mean_all(mul(out, out));
  };
  std::vector<Tensor> leaves{W1, b1, W2, b2, W3};
  Rng pick(5);
  auto res = gradcheck::check(forward, leaves, pick, 20);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("shape and indexing ops match finite differences") {
  Rng rng(23);
  Tensor A = random_param(5, 4, rng, "A");
  Tensor B = random_param(4, 3, rng, "B");

  auto forward = [&]() {
    Tensor m = matmul(A, B);                       // 5×3
    Tensor t = transpose(m);                       // 3×5
    Tensor s = slice_rows(t, 1, 3);                // 2×5
    Tensor c = concat_cols(std::vector<Tensor>{s, slice_rows(t, 0, 2)});  // 2×10
    Tensor sel = select_rows(c, {1, 0, 1});        // 3×10
    Tensor sc = scatter_rows(sel, {2, 0, 2}, 4);   // 4×10
    Tensor mx = max_over_rows(sc);                 // 1×10
    return sum_all(mul(mx, mx));
  };
  std::vector<Tensor> leaves{A, B};
  Rng pick(7);
  auto res = gradcheck::check(forward, leaves, pick, 24);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("broadcast arithmetic matches finite differences") {
  Rng rng(31);
  Tensor A = random_param(4, 3, rng, "A");
  Tensor row = random_param(1, 3, rng, "row");
  Tensor col = random_param(4, 1, rng, "col");
  Tensor s = random_param(1, 1, rng, "s");

  auto forward = [&]() {
    Tensor x = add(A, row);
    x = mul(x, col);
    x = divide(x, add_scalar(mul(s, s), 1.0));
    x = sub(x, scale(row, 0.5));
    return mean_all(mul(x, x));
  };
  std::vector<Tensor> leaves{A, row, col, s};
  Rng pick(13);
  auto res = gradcheck::check(forward, leaves, pick, 10);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("softmax rows are a probability distribution") {
  Rng rng(3);
  std::vector<double> v(40);
  for (auto& x : v) x = 4.0 * rng.normal();
  Tensor logits = Tensor::from(5, 8, v);
  Tensor sm = softmax_rows(logits);
  for (int64_t i = 0; i < 5; ++i) {
    double total = 0.0;
    for (int64_t j = 0; j < 8; ++j) {
      CHECK(sm.at(i, j) >= 0.0);
      total += sm.at(i, j);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
  // log_softmax agrees with log(softmax)
  Tensor lsm = log_softmax_rows(logits);
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 8; ++j)
      CHECK(lsm.at(i, j) == doctest::Approx(std::log(sm.at(i, j))).epsilon(1e-9));
}

TEST_CASE("second-order gradients through a linear critic") {
  // critic(x) = w·x; penalty = (||d critic/dx|| - 1)^2 = (||w|| - 1)^2,
  // so d penalty/d w = 2(||w|| - 1) w/||w||.
  Tensor w = Tensor::param(3, 1, {0.6, -0.8, 1.2}, "w");
  Tensor x = Tensor::param(1, 3, {0.1, 0.2, 0.3}, "x");
  Tensor score = matmul(x, w);
  auto gx = grad(score, std::vector<Tensor>{x}, /*create_graph=*/true);
  Tensor norm = sqrt_act(sum_all(mul(gx[0], gx[0])));
  Tensor pen = mul(sub(norm, Tensor::scalar(1.0)), sub(norm, Tensor::scalar(1.0)));
  backward(pen);

  double n = std::sqrt(0.36 + 0.64 + 1.44);
  std::vector<double> expect = {2 * (n - 1) * 0.6 / n, 2 * (n - 1) * -0.8 / n,
                                2 * (n - 1) * 1.2 / n};
  for (size_t i = 0; i < 3; ++i)
    CHECK(w.grad()[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("grad returns zeros for unreachable inputs") {
  Tensor x = Tensor::param(1, 2, {1.0, 2.0}, "x");
  Tensor y = Tensor::param(1, 2, {3.0, 4.0}, "y");
  Tensor loss = sum_all(mul(x, x));
  auto gs = grad(loss, std::vector<Tensor>{x, y}, false);
  CHECK(gs[1].values()[0] == 0.0);
  CHECK(gs[0].values()[0] == doctest::Approx(2.0));
}

TEST_CASE("checkpoint values round-trip exactly") {
  Rng rng(77);
  Tensor a = random_param(3, 4, rng, "layer.W");
  Tensor b = random_param(1, 4, rng, "layer.b");
  av::nn::Checkpoint ck;
  ck.seed = 123;
  ck.step = 42;
  ck.meta["kind"] = "unit-test";
  ck.add(a);
  ck.add(b);
  ck.save("ckpt_roundtrip.txt");

  auto loaded = av::nn::Checkpoint::load("ckpt_roundtrip.txt");
  CHECK(loaded.seed == 123);
  CHECK(loaded.step == 42);
  CHECK(loaded.meta.at("kind") == "unit-test");
  const Mat& ma = loaded.get("layer.W");
  REQUIRE(ma.rows == 3);
  REQUIRE(ma.cols == 4);
  for (size_t i = 0; i < ma.v.size(); ++i) CHECK(ma.v[i] == a.values()[i]);
}

TEST_CASE("same seed gives bit-identical training trajectories") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Linear l1 = Linear::init(3, 5, rng, "l1");
    Linear l2 = Linear::init(5, 1, rng, "l2");
    std::vector<Tensor> params;
    l1.collect(params);
    l2.collect(params);
    Adam opt(params, {.lr = 0.01});
    for (int it = 0; it < 5; ++it) {
      std::vector<double> xv(6);
      for (auto& x : xv) x = rng.normal();
      Tensor x = Tensor::from(2, 3, xv);
      Tensor out = l2.forward(tanh_act(l1.forward(x)));
      Tensor loss = mean_all(mul(out, out));
      opt.zero_grad();
      backward(loss);
      opt.step();
    }
    std::vector<double> flat;
    for (const auto& p : params) flat.insert(flat.end(), p.values().begin(), p.values().end());
    return flat;
  };
  auto a = run(99), b = run(99), c = run(100);
  CHECK(a == b);
  CHECK(a != c);
}
