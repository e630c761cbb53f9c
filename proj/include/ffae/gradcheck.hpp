#pragma once

// Central-difference verification of every hand-derived gradient path: the
// layer-local forward-forward gradient, the classifier gradient, and the full
// backprop pipeline under a frozen channel realization. The quantized
// pipeline is checked with the saturating forward (clip to [-1,1]) because
// that is the function the straight-through backward rule is the exact
// derivative of; the hard sign() forward is piecewise constant and has no
// finite-difference signal.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ffae/models.hpp"

namespace ffae {

struct GradCheckResult {
  std::string path;
  std::size_t instances = 0;
  double max_rel_err = 0.0;
  double tolerance = 1e-5;

  bool pass() const { return max_rel_err < tolerance; }
};

namespace detail {

inline double gradcheck_rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

// Central differences over one parameter array against its analytic gradient.
inline double fd_max_rel_err(Vec& params, const Vec& analytic,
                             const std::function<double()>& loss, double h) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, gradcheck_rel_err(analytic[i], numeric));
  }
  return worst;
}

inline DenseLayer random_layer(RngStream& rng, std::size_t in, std::size_t out,
                               Activation act) {
  auto [w, b] = init_dense(rng, in, out);
  for (double& v : b) v = 0.2 * (2.0 * rng.next_unit() - 1.0);
  return {std::move(w), std::move(b), act};
}

}  // namespace detail

inline GradCheckResult gradcheck_ff_layer(std::uint64_t seed, std::size_t instances = 24,
                                          double h = 1e-6) {
  GradCheckResult r{"ff-layer-local", instances};
  RngStream rng(seed, 100);
  for (std::size_t it = 0; it < instances; ++it) {
    const std::size_t in = 3 + rng.next_below(7);
    const std::size_t out = 2 + rng.next_below(7);
    const Activation act = it % 3 == 2 ? Activation::linear : Activation::relu;
    const Polarity pol = it % 2 == 0 ? Polarity::positive : Polarity::negative;
    DenseLayer layer = detail::random_layer(rng, in, out, act);
    Vec x = sample_gaussian(rng, 0.0, 1.0, in);
    const double tau = static_cast<double>(out);
    const LayerTape tape = dense_forward(layer, x);
    const LayerGrad g = ff_layer_grad(layer, tape, tau, pol);
    auto loss = [&] {
      return ff_layer_loss(dense_forward(layer, x).goodness, tau, pol);
    };
    r.max_rel_err =
        std::max(r.max_rel_err, detail::fd_max_rel_err(layer.W.a, g.dW.a, loss, h));
    r.max_rel_err =
        std::max(r.max_rel_err, detail::fd_max_rel_err(layer.b, g.db, loss, h));
  }
  return r;
}

inline GradCheckResult gradcheck_classifier(std::uint64_t seed,
                                            std::size_t instances = 20, double h = 1e-6) {
  GradCheckResult r{"classifier-cce", instances};
  RngStream rng(seed, 101);
  for (std::size_t it = 0; it < instances; ++it) {
    const std::size_t in = 4 + rng.next_below(9);
    const std::size_t q = 3 + rng.next_below(8);
    DenseLayer layer = detail::random_layer(rng, in, q, Activation::linear);
    Vec x = sample_gaussian(rng, 0.0, 1.0, in);
    const std::size_t target = rng.next_below(q);
    auto loss = [&] {
      const LayerTape t = dense_forward(layer, x);
      return softmax_cce(t.act, target).loss;
    };
    const LayerTape tape = dense_forward(layer, x);
    const SoftmaxCce sm = softmax_cce(tape.act, target);
    LayerGrad g(layer);
    for (std::size_t j = 0; j < q; ++j) {
      g.db[j] = sm.dlogits[j];
      for (std::size_t i = 0; i < in; ++i) g.dW(j, i) = sm.dlogits[j] * x[i];
    }
    r.max_rel_err =
        std::max(r.max_rel_err, detail::fd_max_rel_err(layer.W.a, g.dW.a, loss, h));
    r.max_rel_err =
        std::max(r.max_rel_err, detail::fd_max_rel_err(layer.b, g.db, loss, h));
  }
  return r;
}

inline GradCheckResult gradcheck_bp_pipeline(std::uint64_t seed, bool quantize,
                                             std::size_t instances = 20, double h = 1e-6) {
  GradCheckResult r{quantize ? "bp-pipeline-quantized-ste" : "bp-pipeline-continuous",
                    instances};
  RngStream rng(seed, quantize ? 103 : 102);
  const QuantizerMode qmode = quantize ? QuantizerMode::saturating : QuantizerMode::hard;
  for (std::size_t it = 0; it < instances; ++it) {
    // Mostly small random shapes plus the reference configuration; alternate
    // unit fading with a Rayleigh draw to cover the fading backward path.
    BpAutoencoder model;
    if (it % 5 == 4) {
      RngStream init(seed + it, 0);
      model = BpAutoencoder::create(CodeParams::make(4, 7), 2, 2, 16, quantize, init);
    } else {
      RngStream init(seed + it, 0);
      const unsigned k = 2 + static_cast<unsigned>(rng.next_below(2));
      const std::size_t n = 3 + rng.next_below(4);
      const std::size_t w = 3 + rng.next_below(4);
      model = BpAutoencoder::create(CodeParams::make(k, n), 2, 2, w, quantize, init);
    }
    // Nonzero biases keep tiny random instances away from the all-dead-ReLU
    // degenerate point (zero-energy encoder output).
    for (auto* stack : {&model.encoder, &model.decoder})
      for (auto& layer : *stack)
        for (double& v : layer.b) v = 0.2 * (2.0 * rng.next_unit() - 1.0);
    FrozenChannel frozen;
    frozen.h = it % 2 == 0 ? 1.0 : sample_rayleigh_one(rng);
    frozen.noise = sample_gaussian(rng, 0.0, 0.5, model.code.n);
    const Message m = static_cast<Message>(rng.next_below(model.code.q));
    const BpPipelineGrads g = bp_pipeline_backward(model, m, frozen, qmode);
    auto loss = [&] { return bp_pipeline_loss(model, m, frozen, qmode); };
    for (std::size_t li = 0; li < model.encoder.size(); ++li) {
      r.max_rel_err = std::max(r.max_rel_err, detail::fd_max_rel_err(
                                                  model.encoder[li].W.a,
                                                  g.encoder[li].dW.a, loss, h));
      r.max_rel_err = std::max(
          r.max_rel_err,
          detail::fd_max_rel_err(model.encoder[li].b, g.encoder[li].db, loss, h));
    }
    for (std::size_t li = 0; li < model.decoder.size(); ++li) {
      r.max_rel_err = std::max(r.max_rel_err, detail::fd_max_rel_err(
                                                  model.decoder[li].W.a,
                                                  g.decoder[li].dW.a, loss, h));
      r.max_rel_err = std::max(
          r.max_rel_err,
          detail::fd_max_rel_err(model.decoder[li].b, g.decoder[li].db, loss, h));
    }
  }
  return r;
}

inline std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed) {
  return {
      gradcheck_ff_layer(seed),
      gradcheck_classifier(seed),
      gradcheck_bp_pipeline(seed, false),
      gradcheck_bp_pipeline(seed, true),
  };
}

}  // namespace ffae
