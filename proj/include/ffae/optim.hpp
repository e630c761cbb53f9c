#pragma once

// SGD with momentum and weight decay, and Adam with bias correction. The
// span-level updates hold the actual recurrences; the layer wrappers apply
// them to a weight matrix and bias vector pair.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

#include "ffae/layers.hpp"

namespace ffae {

// v <- mu*v + (g + wd*p);  p <- p - lr*v
inline void sgd_update(std::span<double> p, std::span<const double> g,
                       std::span<double> v, double lr, double wd, double mu) {
  if (p.size() != g.size() || p.size() != v.size())
    throw std::invalid_argument("sgd_update: shape mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = mu * v[i] + (g[i] + wd * p[i]);
    p[i] -= lr * v[i];
  }
}

inline void adam_update(std::span<double> p, std::span<const double> g,
                        std::span<double> m, std::span<double> v, double lr,
                        double beta1, double beta2, double eps, long step) {
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
    throw std::invalid_argument("adam_update: shape mismatch");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

struct SgdState {
  double lr = 0.0, weight_decay = 0.0, momentum = 0.0;
  Mat vW;
  Vec vb;

  SgdState() = default;
  SgdState(double lr_, double wd, double mu, const DenseLayer& l)
      : lr(lr_), weight_decay(wd), momentum(mu), vW(l.out(), l.in()), vb(l.out(), 0.0) {}
};

inline void sgd_step(DenseLayer& layer, const LayerGrad& grad, SgdState& st) {
  if (!grad.dW.same_shape(layer.W) || grad.db.size() != layer.b.size())
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  sgd_update(layer.W.a, grad.dW.a, st.vW.a, st.lr, st.weight_decay, st.momentum);
  sgd_update(layer.b, grad.db, st.vb, st.lr, st.weight_decay, st.momentum);
}

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Mat mW, vW;
  Vec mb, vb;
  long step = 0;

  AdamState() = default;
  AdamState(double lr_, const DenseLayer& l)
      : lr(lr_),
        mW(l.out(), l.in()),
        vW(l.out(), l.in()),
        mb(l.out(), 0.0),
        vb(l.out(), 0.0) {}
};

inline void adam_step(DenseLayer& layer, const LayerGrad& grad, AdamState& st) {
  if (!grad.dW.same_shape(layer.W) || grad.db.size() != layer.b.size())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  ++st.step;
  adam_update(layer.W.a, grad.dW.a, st.mW.a, st.vW.a, st.lr, st.beta1, st.beta2, st.eps,
              st.step);
  adam_update(layer.b, grad.db, st.mb, st.vb, st.lr, st.beta1, st.beta2, st.eps, st.step);
}

}  // namespace ffae
