#pragma once

// Dense layers with hand-derived gradients. Two gradient paths exist: the
// layer-local one used by forward-forward training (loss is a function of the
// layer's own goodness only, nothing flows to the input) and classic
// reverse-mode backpropagation over a stack of layers.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ffae/mat.hpp"

namespace ffae {

inline constexpr double kNormEps = 1e-12;

enum class Activation { relu, linear };
enum class Polarity { positive, negative };

struct DenseLayer {
  Mat W;  // [out x in]
  Vec b;
  Activation act = Activation::relu;

  std::size_t in() const { return W.cols; }
  std::size_t out() const { return W.rows; }
  std::size_t parameter_count() const { return W.rows * W.cols + b.size(); }
};

// Everything recorded during one forward evaluation of one layer.
// goodness = ||act||^2 of the raw (pre-normalization) activation.
struct LayerTape {
  Vec input;
  Vec pre;
  Vec act;
  double goodness = 0.0;
  double norm = 0.0;
};

struct LayerBatchTape {
  Mat input;  // [B x in]
  Mat pre;    // [B x out]
  Mat act;    // [B x out]
  Vec goodness;
  Vec norm;
};

struct LayerGrad {
  Mat dW;
  Vec db;

  LayerGrad() = default;
  explicit LayerGrad(const DenseLayer& l) : dW(l.out(), l.in()), db(l.out(), 0.0) {}
  void zero() {
    dW.zero();
    std::fill(db.begin(), db.end(), 0.0);
  }
};

inline double softplus(double x) {
  // max(x,0) + log1p(e^-|x|): exact softplus without overflow for large |x|.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vec l2_normalize(const Vec& v) {
  const double norm = l2_norm(v.data(), v.size());
  Vec out(v.size(), 0.0);
  if (norm > kNormEps)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

inline LayerTape dense_forward(const DenseLayer& layer, const Vec& x) {
  if (x.size() != layer.in()) throw std::invalid_argument("dense_forward: input width mismatch");
  LayerTape t;
  t.input = x;
  t.pre.resize(layer.out());
  for (std::size_t j = 0; j < layer.out(); ++j)
    t.pre[j] = layer.b[j] + dot(layer.W.row(j), x.data(), layer.in());
  t.act = t.pre;
  if (layer.act == Activation::relu)
    for (double& v : t.act) v = std::max(v, 0.0);
  t.goodness = dot(t.act.data(), t.act.data(), t.act.size());
  t.norm = std::sqrt(t.goodness);
  return t;
}

inline LayerBatchTape dense_forward_batch(const DenseLayer& layer, Mat X) {
  if (X.cols != layer.in())
    throw std::invalid_argument("dense_forward_batch: input width mismatch");
  LayerBatchTape t;
  t.pre = Mat(X.rows, layer.out());
  matmul_nt(X, layer.W, t.pre);
  for (std::size_t b = 0; b < X.rows; ++b) {
    double* row = t.pre.row(b);
    for (std::size_t j = 0; j < layer.out(); ++j) row[j] += layer.b[j];
  }
  t.act = t.pre;
  if (layer.act == Activation::relu)
    for (double& v : t.act.a) v = std::max(v, 0.0);
  t.goodness.resize(X.rows);
  t.norm.resize(X.rows);
  for (std::size_t b = 0; b < X.rows; ++b) {
    t.goodness[b] = dot(t.act.row(b), t.act.row(b), layer.out());
    t.norm[b] = std::sqrt(t.goodness[b]);
  }
  t.input = std::move(X);
  return t;
}

// The network chain scales activities to unit mean square (norm sqrt(dim))
// rather than unit norm: with width-valued goodness thresholds, a freshly
// initialized layer then starts exactly at its threshold, which is what makes
// the contrastive objective sensitive from the first iteration.
inline Vec rms_normalize(const Vec& v) {
  const double norm = l2_norm(v.data(), v.size());
  Vec out(v.size(), 0.0);
  if (norm > kNormEps) {
    const double s = std::sqrt(static_cast<double>(v.size())) / norm;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s;
  }
  return out;
}

// Row-wise rms normalization using precomputed norms.
inline Mat rms_normalize_rows(const Mat& A, const Vec& norms) {
  Mat out(A.rows, A.cols, 0.0);
  const double root_d = std::sqrt(static_cast<double>(A.cols));
  for (std::size_t b = 0; b < A.rows; ++b) {
    if (norms[b] <= kNormEps) continue;
    const double s = root_d / norms[b];
    const double* src = A.row(b);
    double* dst = out.row(b);
    for (std::size_t j = 0; j < A.cols; ++j) dst[j] = src[j] * s;
  }
  return out;
}

inline void rms_normalize_rows_inplace(Mat& A) {
  const double root_d = std::sqrt(static_cast<double>(A.cols));
  for (std::size_t b = 0; b < A.rows; ++b) {
    double* row = A.row(b);
    const double norm = l2_norm(row, A.cols);
    if (norm <= kNormEps) {
      for (std::size_t j = 0; j < A.cols; ++j) row[j] = 0.0;
      continue;
    }
    const double s = root_d / norm;
    for (std::size_t j = 0; j < A.cols; ++j) row[j] *= s;
  }
}

// Per-layer loss: softplus(-(g - tau)) pushes goodness above the threshold
// for positive samples, softplus(g - tau) pushes it below for negative ones.
inline double ff_layer_loss(double goodness, double tau, Polarity polarity) {
  const double d = goodness - tau;
  return polarity == Polarity::positive ? softplus(-d) : softplus(d);
}

// d(loss)/d(goodness) for the loss above.
inline double ff_loss_dgoodness(double goodness, double tau, Polarity polarity) {
  const double d = goodness - tau;
  return polarity == Polarity::positive ? -sigmoid(-d) : sigmoid(d);
}

// Gradient of the layer-local loss with respect to this layer's parameters
// only. dL/dz_j = dL/dg * 2*act_j: the ReLU derivative is already folded in
// because act_j is zero wherever pre_j <= 0, and the final linear layer has
// derivative one.
inline LayerGrad ff_layer_grad(const DenseLayer& layer, const LayerTape& tape,
                               double tau, Polarity polarity) {
  if (tape.input.size() != layer.in() || tape.act.size() != layer.out())
    throw std::invalid_argument("ff_layer_grad: tape does not match layer");
  const double s = ff_loss_dgoodness(tape.goodness, tau, polarity);
  LayerGrad g(layer);
  for (std::size_t j = 0; j < layer.out(); ++j) {
    const double dz = 2.0 * s * tape.act[j];
    g.db[j] = dz;
    double* row = g.dW.row(j);
    for (std::size_t i = 0; i < layer.in(); ++i) row[i] = dz * tape.input[i];
  }
  return g;
}

// Batched version accumulating scale * sum_b grad_b into `acc`.
inline void ff_layer_grad_batch(const DenseLayer& layer, const LayerBatchTape& tape,
                                double tau, Polarity polarity, double scale,
                                LayerGrad& acc) {
  const std::size_t B = tape.act.rows;
  Mat dz(B, layer.out());
  for (std::size_t b = 0; b < B; ++b) {
    const double s = 2.0 * ff_loss_dgoodness(tape.goodness[b], tau, polarity);
    const double* a = tape.act.row(b);
    double* d = dz.row(b);
    for (std::size_t j = 0; j < layer.out(); ++j) d[j] = s * a[j];
  }
  matmul_tn_acc(dz, tape.input, scale, acc.dW);
  for (std::size_t b = 0; b < B; ++b) {
    const double* d = dz.row(b);
    for (std::size_t j = 0; j < layer.out(); ++j) acc.db[j] += scale * d[j];
  }
}

struct SoftmaxCce {
  Vec p;
  double loss = 0.0;
  Vec dlogits;  // p - one_hot(target)
};

inline SoftmaxCce softmax_cce(const Vec& logits, std::size_t target) {
  if (logits.empty() || target >= logits.size())
    throw std::invalid_argument("softmax_cce: target out of range");
  SoftmaxCce r;
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  r.p.resize(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.p[i] = std::exp(logits[i] - mx);
    z += r.p[i];
  }
  for (double& v : r.p) v /= z;
  r.loss = -std::log(r.p[target]);
  r.dlogits = r.p;
  r.dlogits[target] -= 1.0;
  return r;
}

struct StackGrads {
  std::vector<LayerGrad> layers;
  Vec dinput;
};

// Reverse-mode gradients through a stack of dense layers. `output_grad` is
// dLoss/d(act of the last layer); the optional STE mask (0/1 per component)
// is applied to it first, which places the quantizer immediately after the
// stack output.
inline StackGrads bp_backward(const std::vector<DenseLayer>& stack,
                              const std::vector<LayerTape>& tapes, Vec output_grad,
                              const Vec* ste_mask = nullptr) {
  if (stack.empty() || tapes.size() != stack.size())
    throw std::invalid_argument("bp_backward: stack/tape length mismatch");
  if (output_grad.size() != stack.back().out())
    throw std::invalid_argument("bp_backward: output grad width mismatch");
  if (ste_mask) {
    if (ste_mask->size() != output_grad.size())
      throw std::invalid_argument("bp_backward: STE mask width mismatch");
    for (std::size_t j = 0; j < output_grad.size(); ++j) output_grad[j] *= (*ste_mask)[j];
  }
  StackGrads out;
  out.layers.resize(stack.size());
  Vec grad = std::move(output_grad);
  for (std::size_t li = stack.size(); li-- > 0;) {
    const DenseLayer& layer = stack[li];
    const LayerTape& tape = tapes[li];
    if (tape.input.size() != layer.in() || tape.pre.size() != layer.out())
      throw std::invalid_argument("bp_backward: tape does not match layer");
    Vec dz(layer.out());
    for (std::size_t j = 0; j < layer.out(); ++j)
      dz[j] = (layer.act == Activation::relu && tape.pre[j] <= 0.0) ? 0.0 : grad[j];
    LayerGrad& g = out.layers[li];
    g = LayerGrad(layer);
    for (std::size_t j = 0; j < layer.out(); ++j) {
      g.db[j] = dz[j];
      double* row = g.dW.row(j);
      for (std::size_t i = 0; i < layer.in(); ++i) row[i] = dz[j] * tape.input[i];
    }
    Vec prev(layer.in(), 0.0);
    for (std::size_t j = 0; j < layer.out(); ++j) {
      const double* row = layer.W.row(j);
      for (std::size_t i = 0; i < layer.in(); ++i) prev[i] += dz[j] * row[i];
    }
    grad = std::move(prev);
  }
  out.dinput = std::move(grad);
  return out;
}

// Batched reverse pass; `dout` must already carry any 1/B scaling. Gradients
// are accumulated into `grads` (pre-sized, caller zeroes). Returns dInput.
inline Mat bp_backward_batch(const std::vector<DenseLayer>& stack,
                             const std::vector<LayerBatchTape>& tapes, Mat dout,
                             std::vector<LayerGrad>& grads) {
  if (stack.empty() || tapes.size() != stack.size() || grads.size() != stack.size())
    throw std::invalid_argument("bp_backward_batch: stack/tape length mismatch");
  Mat grad = std::move(dout);
  for (std::size_t li = stack.size(); li-- > 0;) {
    const DenseLayer& layer = stack[li];
    const LayerBatchTape& tape = tapes[li];
    if (layer.act == Activation::relu) {
      for (std::size_t idx = 0; idx < grad.a.size(); ++idx)
        if (tape.pre.a[idx] <= 0.0) grad.a[idx] = 0.0;
    }
    matmul_tn_acc(grad, tape.input, 1.0, grads[li].dW);
    for (std::size_t b = 0; b < grad.rows; ++b) {
      const double* d = grad.row(b);
      for (std::size_t j = 0; j < layer.out(); ++j) grads[li].db[j] += d[j];
    }
    Mat prev(grad.rows, layer.in());
    matmul_nn(grad, layer.W, prev);
    grad = std::move(prev);
  }
  return grad;
}

}  // namespace ffae
