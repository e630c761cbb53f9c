#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ffae/layers.hpp"
#include "ffae/models.hpp"
#include "ffae/optim.hpp"
#include "ffae/rng.hpp"

using namespace ffae;

namespace {

DenseLayer identity_layer(std::size_t n, Activation act) {
  DenseLayer l{Mat(n, n), Vec(n, 0.0), act};
  for (std::size_t i = 0; i < n; ++i) l.W(i, i) = 1.0;
  return l;
}

DenseLayer random_layer(RngStream& rng, std::size_t in, std::size_t out, Activation act) {
  auto [w, b] = init_dense(rng, in, out);
  for (double& v : b) v = 0.3 * (2.0 * rng.next_unit() - 1.0);
  return DenseLayer{std::move(w), std::move(b), act};
}

}  // namespace

TEST_CASE("dense forward basics") {
  SECTION("identity relu") {
    const LayerTape t = dense_forward(identity_layer(2, Activation::relu), {1.0, -1.0});
    REQUIRE(t.act == Vec{1.0, 0.0});
    REQUIRE(t.goodness == 1.0);
  }
  SECTION("identity linear") {
    const LayerTape t = dense_forward(identity_layer(2, Activation::linear), {3.0, 4.0});
    REQUIRE(t.act == Vec{3.0, 4.0});
    REQUIRE(t.goodness == 25.0);
    REQUIRE(t.norm == 5.0);
  }
  SECTION("zero input, zero bias") {
    const LayerTape t = dense_forward(identity_layer(3, Activation::relu), {0.0, 0.0, 0.0});
    REQUIRE(t.goodness == 0.0);
  }
  SECTION("width mismatch") {
    REQUIRE_THROWS_AS(dense_forward(identity_layer(3, Activation::relu), {1.0}),
                      std::invalid_argument);
  }
}

TEST_CASE("l2 normalization") {
  REQUIRE(l2_normalize({3.0, 4.0}) == Vec{0.6, 0.8});
  REQUIRE(l2_normalize({0.0, 0.0}) == Vec{0.0, 0.0});

  RngStream rng(5, 0);
  for (int it = 0; it < 50; ++it) {
    const Vec v = sample_gaussian(rng, 0.0, 2.0, 8);
    const Vec u = l2_normalize(v);
    REQUIRE(std::abs(l2_norm(u.data(), u.size()) - 1.0) < 1e-12);
    const Vec uu = l2_normalize(u);
    for (std::size_t i = 0; i < u.size(); ++i)
      REQUIRE(std::abs(uu[i] - u[i]) < 1e-12);  // idempotent on unit norm
  }
}

TEST_CASE("layer loss values") {
  const double ln2 = 0.69314718055994531;
  REQUIRE(ff_layer_loss(7.0, 7.0, Polarity::positive) == Catch::Approx(ln2).epsilon(1e-12));
  REQUIRE(ff_layer_loss(7.0, 7.0, Polarity::negative) == Catch::Approx(ln2).epsilon(1e-12));
  // softplus(-50) and softplus(50), evaluated without overflow
  REQUIRE(ff_layer_loss(57.0, 7.0, Polarity::positive) ==
          Catch::Approx(1.9287498479942364e-22).epsilon(1e-9));
  REQUIRE(ff_layer_loss(57.0, 7.0, Polarity::negative) ==
          Catch::Approx(50.0).epsilon(1e-12));

  RngStream rng(6, 0);
  for (int it = 0; it < 200; ++it) {
    const double g = 1000.0 * rng.next_unit();
    const double tau = 200.0 * rng.next_unit();
    for (Polarity pol : {Polarity::positive, Polarity::negative}) {
      const double loss = ff_layer_loss(g, tau, pol);
      REQUIRE(std::isfinite(loss));
      REQUIRE(loss >= 0.0);
    }
  }
}

TEST_CASE("layer-local gradient against central differences") {
  RngStream rng(8, 0);
  for (Polarity pol : {Polarity::positive, Polarity::negative}) {
    DenseLayer layer = random_layer(rng, 5, 7, Activation::relu);
    const Vec x = sample_gaussian(rng, 0.0, 1.0, 5);
    const double tau = 7.0;
    const LayerGrad g = ff_layer_grad(layer, dense_forward(layer, x), tau, pol);
    const double h = 1e-6;
    double worst = 0.0;
    auto loss = [&] { return ff_layer_loss(dense_forward(layer, x).goodness, tau, pol); };
    for (std::size_t i = 0; i < layer.W.a.size(); ++i) {
      const double saved = layer.W.a[i];
      layer.W.a[i] = saved + h;
      const double up = loss();
      layer.W.a[i] = saved - h;
      const double down = loss();
      layer.W.a[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(g.dW.a[i]), 1e-3});
      worst = std::max(worst, std::abs(fd - g.dW.a[i]) / denom);
    }
    REQUIRE(worst < 1e-5);
  }
}

TEST_CASE("layer-local gradient degenerate regions") {
  SECTION("dead relu region has zero gradient") {
    DenseLayer l = identity_layer(3, Activation::relu);
    const LayerTape t = dense_forward(l, {-1.0, -2.0, -0.5});
    const LayerGrad g = ff_layer_grad(l, t, 3.0, Polarity::positive);
    for (double v : g.dW.a) REQUIRE(v == 0.0);
    for (double v : g.db) REQUIRE(v == 0.0);
  }
  SECTION("saturated positive loss gives a vanishing update") {
    DenseLayer l = identity_layer(2, Activation::linear);
    const LayerTape t = dense_forward(l, {30.0, 0.0});  // goodness 900 >> tau
    const LayerGrad g = ff_layer_grad(l, t, 2.0, Polarity::positive);
    for (double v : g.dW.a) REQUIRE(std::abs(v) < 1e-300);
  }
}

TEST_CASE("ff gradient is layer-local by construction") {
  // The gradient structure only contains the layer's own tensors; feeding a
  // stale tape from another layer is rejected.
  RngStream rng(9, 0);
  DenseLayer a = random_layer(rng, 4, 6, Activation::relu);
  DenseLayer b = random_layer(rng, 6, 3, Activation::relu);
  const LayerTape ta = dense_forward(a, sample_gaussian(rng, 0.0, 1.0, 4));
  REQUIRE_THROWS_AS(ff_layer_grad(b, ta, 3.0, Polarity::positive), std::invalid_argument);
}

TEST_CASE("softmax cross-entropy") {
  SECTION("uniform logits") {
    const SoftmaxCce r = softmax_cce(Vec(16, 0.25), 3);
    REQUIRE(r.loss == Catch::Approx(2.7725887222397812).epsilon(1e-12));
    for (double p : r.p) REQUIRE(p == Catch::Approx(1.0 / 16).epsilon(1e-12));
  }
  SECTION("max shift keeps huge logits finite") {
    Vec logits(8, 0.0);
    logits[0] = 1000.0;
    const SoftmaxCce r = softmax_cce(logits, 0);
    REQUIRE(std::isfinite(r.loss));
    REQUIRE(r.loss < 1e-9);
  }
  SECTION("out-of-range target") {
    REQUIRE_THROWS_AS(softmax_cce(Vec(4, 0.0), 4), std::invalid_argument);
  }
  SECTION("logit gradient against central differences") {
    RngStream rng(10, 0);
    Vec logits = sample_gaussian(rng, 0.0, 1.5, 9);
    const std::size_t target = 4;
    const SoftmaxCce r = softmax_cce(logits, target);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double saved = logits[i];
      logits[i] = saved + h;
      const double up = softmax_cce(logits, target).loss;
      logits[i] = saved - h;
      const double down = softmax_cce(logits, target).loss;
      logits[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - r.dlogits[i]));
    }
    REQUIRE(worst < 1e-8);
  }
}

TEST_CASE("stack backward basics") {
  SECTION("single linear layer, loss = act[0]") {
    RngStream rng(12, 0);
    DenseLayer l = random_layer(rng, 4, 3, Activation::linear);
    const Vec x = sample_gaussian(rng, 0.0, 1.0, 4);
    const std::vector<DenseLayer> stack{l};
    const std::vector<LayerTape> tapes{dense_forward(l, x)};
    const StackGrads g = bp_backward(stack, tapes, {1.0, 0.0, 0.0});
    for (std::size_t i = 0; i < 4; ++i) {
      REQUIRE(g.layers[0].dW(0, i) == x[i]);
      REQUIRE(g.layers[0].dW(1, i) == 0.0);
      REQUIRE(g.layers[0].dW(2, i) == 0.0);
      REQUIRE(g.dinput[i] == l.W(0, i));
    }
    REQUIRE(g.layers[0].db == Vec{1.0, 0.0, 0.0});
  }
  SECTION("an all-blocking STE mask zeroes every gradient") {
    RngStream rng(13, 0);
    DenseLayer l = random_layer(rng, 3, 3, Activation::linear);
    const Vec x = sample_gaussian(rng, 0.0, 1.0, 3);
    const std::vector<DenseLayer> stack{l};
    const std::vector<LayerTape> tapes{dense_forward(l, x)};
    const Vec mask(3, 0.0);
    const StackGrads g = bp_backward(stack, tapes, {0.7, -0.3, 1.1}, &mask);
    for (double v : g.layers[0].dW.a) REQUIRE(v == 0.0);
    for (double v : g.dinput) REQUIRE(v == 0.0);
  }
  SECTION("length mismatch") {
    const std::vector<DenseLayer> stack{identity_layer(2, Activation::relu)};
    REQUIRE_THROWS_AS(bp_backward(stack, {}, {1.0, 0.0}), std::invalid_argument);
  }
}

TEST_CASE("batched stack backward matches per-sample composition") {
  RngStream rng(14, 0);
  std::vector<DenseLayer> stack{random_layer(rng, 5, 6, Activation::relu),
                                random_layer(rng, 6, 4, Activation::linear)};
  const std::size_t B = 3;
  Mat X(B, 5);
  for (double& v : X.a) v = rng.next_gaussian();
  std::vector<LayerBatchTape> tapes;
  bp_stack_forward_batch(stack, X, &tapes);
  Mat dout(B, 4);
  for (double& v : dout.a) v = rng.next_gaussian();

  std::vector<LayerGrad> grads;
  for (const auto& l : stack) grads.emplace_back(l);
  for (auto& g : grads) g.zero();
  const Mat dinput = bp_backward_batch(stack, tapes, dout, grads);

  std::vector<LayerGrad> expected;
  for (const auto& l : stack) expected.emplace_back(l);
  for (auto& g : expected) g.zero();
  for (std::size_t b = 0; b < B; ++b) {
    Vec x(X.row(b), X.row(b) + 5);
    std::vector<LayerTape> t{dense_forward(stack[0], x),
                             dense_forward(stack[1], dense_forward(stack[0], x).act)};
    const StackGrads g = bp_backward(stack, t, Vec(dout.row(b), dout.row(b) + 4));
    for (std::size_t li = 0; li < 2; ++li) {
      for (std::size_t i = 0; i < g.layers[li].dW.a.size(); ++i)
        expected[li].dW.a[i] += g.layers[li].dW.a[i];
      for (std::size_t i = 0; i < g.layers[li].db.size(); ++i)
        expected[li].db[i] += g.layers[li].db[i];
    }
    for (std::size_t i = 0; i < 5; ++i)
      REQUIRE(dinput(b, i) == Catch::Approx(g.dinput[i]).margin(1e-14));
  }
  for (std::size_t li = 0; li < 2; ++li) {
    for (std::size_t i = 0; i < grads[li].dW.a.size(); ++i)
      REQUIRE(grads[li].dW.a[i] == Catch::Approx(expected[li].dW.a[i]).margin(1e-13));
    for (std::size_t i = 0; i < grads[li].db.size(); ++i)
      REQUIRE(grads[li].db[i] == Catch::Approx(expected[li].db[i]).margin(1e-13));
  }
}

TEST_CASE("sgd step") {
  SECTION("single-step recurrence") {
    Vec p{1.0}, g{0.5}, v{0.0};
    sgd_update(p, g, v, 0.1, 0.0, 0.9);
    REQUIRE(p[0] == Catch::Approx(0.95).epsilon(1e-15));
  }
  SECTION("zero gradient is a fixed point") {
    Vec p{0.7}, g{0.0}, v{0.0};
    for (int i = 0; i < 10; ++i) sgd_update(p, g, v, 0.1, 0.0, 0.9);
    REQUIRE(p[0] == 0.7);
  }
  SECTION("pure weight decay shrinks by (1 - lr*wd)") {
    Vec p{1.0}, g{0.0}, v{0.0};
    sgd_update(p, g, v, 0.1, 0.1, 0.0);
    REQUIRE(p[0] == Catch::Approx(0.99).epsilon(1e-15));
    sgd_update(p, g, v, 0.1, 0.1, 0.0);
    REQUIRE(p[0] == Catch::Approx(0.99 * 0.99).epsilon(1e-12));
  }
  SECTION("shape mismatch") {
    Vec p{1.0, 2.0}, g{0.5}, v{0.0};
    REQUIRE_THROWS_AS(sgd_update(p, g, v, 0.1, 0.0, 0.9), std::invalid_argument);
  }
}

TEST_CASE("adam step") {
  SECTION("bias-corrected first step") {
    Vec p{0.0}, g{1.0}, m{0.0}, v{0.0};
    adam_update(p, g, m, v, 0.001, 0.9, 0.999, 1e-8, 1);
    REQUIRE(std::abs(p[0]) >= 0.000999);
    REQUIRE(std::abs(p[0]) <= 0.001);
  }
  SECTION("zero gradient from a fresh state is a no-op") {
    Vec p{0.4}, g{0.0}, m{0.0}, v{0.0};
    adam_update(p, g, m, v, 0.001, 0.9, 0.999, 1e-8, 1);
    REQUIRE(p[0] == 0.4);
  }
  SECTION("constant gradient drives per-step updates to the learning rate") {
    Vec p{0.0}, g{3.7}, m{0.0}, v{0.0};
    double prev = 0.0;
    for (long t = 1; t <= 100; ++t) {
      prev = p[0];
      adam_update(p, g, m, v, 0.001, 0.9, 0.999, 1e-8, t);
    }
    REQUIRE(std::abs(p[0] - prev) == Catch::Approx(0.001).epsilon(1e-6));
  }
}
