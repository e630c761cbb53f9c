#pragma once

// Model assembly and forward passes. The forward-forward autoencoder feeds a
// contrastive input (message one-hot next to a replicated / wrong / zero
// label half) through l2-normalized dense layers, transmits the encoder
// output over the channel, and classifies the concatenated decoder
// activities. The backprop baseline is a plain one-hot-in, logits-out
// autoencoder around the same channel.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffae/channel.hpp"
#include "ffae/layers.hpp"
#include "ffae/rng.hpp"

namespace ffae {

using Message = std::uint32_t;

struct CodeParams {
  unsigned k = 4;        // bits per message
  std::size_t q = 16;    // 2^k
  std::size_t n = 7;     // blocklength

  double rate() const { return static_cast<double>(k) / static_cast<double>(n); }

  static CodeParams make(unsigned k, std::size_t n) {
    if (k == 0 || k > 24) throw std::invalid_argument("CodeParams: k out of range");
    if (n == 0) throw std::invalid_argument("CodeParams: blocklength must be positive");
    return CodeParams{k, std::size_t{1} << k, n};
  }
};

enum class PassKind { positive, negative, neutral };

inline Vec one_hot(Message m, std::size_t q) {
  if (m >= q) throw std::invalid_argument("one_hot: message out of range");
  Vec v(q, 0.0);
  v[m] = 1.0;
  return v;
}

inline Message draw_wrong_message(Message m, std::size_t q, RngStream& rng) {
  const auto j = rng.next_below(q - 1);
  return static_cast<Message>(j + (j >= m ? 1 : 0));
}

// Contrastive input of width 2q: (1_m || 1_m) positive, (1_m || 1_mbar) with
// mbar != m negative, (1_m || 0) neutral.
inline Vec build_input(Message m, PassKind kind, RngStream& rng, std::size_t q) {
  if (m >= q) throw std::invalid_argument("build_input: message out of range");
  Vec v(2 * q, 0.0);
  v[m] = 1.0;
  switch (kind) {
    case PassKind::positive: v[q + m] = 1.0; break;
    case PassKind::negative: v[q + draw_wrong_message(m, q, rng)] = 1.0; break;
    case PassKind::neutral: break;
  }
  return v;
}

inline Mat build_input_batch(std::span<const Message> msgs, PassKind kind,
                             RngStream& rng, std::size_t q) {
  Mat X(msgs.size(), 2 * q, 0.0);
  for (std::size_t b = 0; b < msgs.size(); ++b) {
    if (msgs[b] >= q) throw std::invalid_argument("build_input: message out of range");
    double* row = X.row(b);
    row[msgs[b]] = 1.0;
    if (kind == PassKind::positive)
      row[q + msgs[b]] = 1.0;
    else if (kind == PassKind::negative)
      row[q + draw_wrong_message(msgs[b], q, rng)] = 1.0;
  }
  return X;
}

inline Mat one_hot_batch(std::span<const Message> msgs, std::size_t q) {
  Mat X(msgs.size(), q, 0.0);
  for (std::size_t b = 0; b < msgs.size(); ++b) {
    if (msgs[b] >= q) throw std::invalid_argument("one_hot: message out of range");
    X.row(b)[msgs[b]] = 1.0;
  }
  return X;
}

// ---------------------------------------------------------------------------
// Model structures

struct FfAutoencoder {
  CodeParams code;
  OutputStage stage = OutputStage::normalize;
  std::vector<DenseLayer> encoder;  // 2q -> W -> ... -> n, final layer linear
  std::vector<DenseLayer> decoder;  // n -> W -> ... -> W, all ReLU
  DenseLayer classifier;            // concat of decoder activities -> q, linear
  Vec encoder_tau, decoder_tau;     // per-layer thresholds = output widths

  std::size_t classifier_input_width() const {
    std::size_t w = 0;
    for (const auto& l : decoder) w += l.out();
    return w;
  }

  static FfAutoencoder create(CodeParams code, std::size_t enc_layers,
                              std::size_t dec_layers, std::size_t width,
                              OutputStage stage, RngStream& rng) {
    if (enc_layers == 0 || dec_layers == 0 || width == 0)
      throw std::invalid_argument("FfAutoencoder: layer counts and width must be positive");
    FfAutoencoder m;
    m.code = code;
    m.stage = stage;
    std::size_t in = 2 * code.q;
    for (std::size_t i = 0; i < enc_layers; ++i) {
      const bool last = i + 1 == enc_layers;
      const std::size_t out = last ? code.n : width;
      auto [w, b] = init_dense(rng, in, out);
      m.encoder.push_back({std::move(w), std::move(b),
                           last ? Activation::linear : Activation::relu});
      m.encoder_tau.push_back(static_cast<double>(out));
      in = out;
    }
    in = code.n;
    for (std::size_t i = 0; i < dec_layers; ++i) {
      auto [w, b] = init_dense(rng, in, width);
      m.decoder.push_back({std::move(w), std::move(b), Activation::relu});
      m.decoder_tau.push_back(static_cast<double>(width));
      in = width;
    }
    auto [cw, cb] = init_dense(rng, m.classifier_input_width(), code.q);
    m.classifier = {std::move(cw), std::move(cb), Activation::linear};
    return m;
  }
};

struct BpAutoencoder {
  CodeParams code;
  bool quantize = false;
  std::vector<DenseLayer> encoder;  // q -> W -> ... -> n, final layer linear
  std::vector<DenseLayer> decoder;  // n -> W -> ... -> q logits

  static BpAutoencoder create(CodeParams code, std::size_t enc_layers,
                              std::size_t dec_layers, std::size_t width, bool quantize,
                              RngStream& rng) {
    if (enc_layers == 0 || dec_layers == 0 || width == 0)
      throw std::invalid_argument("BpAutoencoder: layer counts and width must be positive");
    BpAutoencoder m;
    m.code = code;
    m.quantize = quantize;
    std::size_t in = code.q;
    for (std::size_t i = 0; i < enc_layers; ++i) {
      const bool last = i + 1 == enc_layers;
      const std::size_t out = last ? code.n : width;
      auto [w, b] = init_dense(rng, in, out);
      m.encoder.push_back({std::move(w), std::move(b),
                           last ? Activation::linear : Activation::relu});
      in = out;
    }
    in = code.n;
    for (std::size_t i = 0; i < dec_layers; ++i) {
      const bool last = i + 1 == dec_layers;
      const std::size_t out = last ? code.q : width;
      auto [w, b] = init_dense(rng, in, out);
      m.decoder.push_back({std::move(w), std::move(b),
                           last ? Activation::linear : Activation::relu});
      in = out;
    }
    return m;
  }
};

inline std::size_t count_parameters(const std::vector<DenseLayer>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

inline std::size_t count_parameters(const FfAutoencoder& m) {
  return count_parameters(m.encoder) + count_parameters(m.decoder) +
         m.classifier.parameter_count();
}

inline std::size_t count_parameters(const BpAutoencoder& m) {
  return count_parameters(m.encoder) + count_parameters(m.decoder);
}

// Index of the largest probability; ties break toward the smallest index.
inline Message decode(const Vec& p) {
  if (p.empty()) throw std::invalid_argument("decode: empty probability vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return static_cast<Message>(best);
}

// ---------------------------------------------------------------------------
// Forward-forward passes

struct FfNetResult {
  std::vector<LayerTape> tapes;
  std::vector<Vec> activities;  // normalized to unit mean square, one per layer
  std::vector<double> losses;   // empty for neutral passes
};

// The per-sample network pass: the input is normalized once, then each layer
// computes its activation, goodness and per-layer loss, and hands the
// normalized activity to the next layer. Normalization scales to unit mean
// square (see rms_normalize), keeping every layer's goodness at its
// width-valued threshold at initialization.
inline FfNetResult ff_net_forward(const std::vector<DenseLayer>& net, const Vec& x0,
                                  PassKind kind, const Vec& taus) {
  if (taus.size() != net.size())
    throw std::invalid_argument("ff_net_forward: threshold count mismatch");
  FfNetResult r;
  Vec x = rms_normalize(x0);
  for (std::size_t i = 0; i < net.size(); ++i) {
    LayerTape tape = dense_forward(net[i], x);
    if (kind != PassKind::neutral)
      r.losses.push_back(ff_layer_loss(tape.goodness, taus[i],
                                       kind == PassKind::positive ? Polarity::positive
                                                                  : Polarity::negative));
    r.activities.push_back(rms_normalize(tape.act));
    x = r.activities.back();
    r.tapes.push_back(std::move(tape));
  }
  return r;
}

struct FfPassResult {
  std::vector<double> losses;  // encoder then decoder, empty for neutral
  Vec p;
  double cce = 0.0;
  Message decoded = 0;
  Codeword x;
  double h = 1.0;
  Vec y;
};

inline FfPassResult ff_autoencoder_pass(const FfAutoencoder& model, Message m,
                                        PassKind kind, const ChannelConfig& cfg,
                                        OutputStage stage, RngStream& rng) {
  if (cfg.n != model.code.n)
    throw std::invalid_argument("ff_autoencoder_pass: channel blocklength mismatch");
  FfPassResult r;
  const Vec v = build_input(m, kind, rng, model.code.q);
  FfNetResult enc = ff_net_forward(model.encoder, v, kind, model.encoder_tau);
  r.x = stage == OutputStage::normalize ? normalize_power(enc.activities.back())
                                        : quantize_sign(enc.activities.back());
  Transmission tx = transmit(cfg, r.x, rng);
  r.h = tx.h;
  r.y = tx.y;
  FfNetResult dec = ff_net_forward(model.decoder, r.y, kind, model.decoder_tau);
  r.losses = std::move(enc.losses);
  r.losses.insert(r.losses.end(), dec.losses.begin(), dec.losses.end());
  Vec concat;
  concat.reserve(model.classifier_input_width());
  for (const Vec& a : dec.activities) concat.insert(concat.end(), a.begin(), a.end());
  Vec logits(model.code.q);
  for (std::size_t j = 0; j < model.code.q; ++j)
    logits[j] = model.classifier.b[j] +
                dot(model.classifier.W.row(j), concat.data(), concat.size());
  SoftmaxCce sm = softmax_cce(logits, m);
  r.p = std::move(sm.p);
  r.cce = sm.loss;
  r.decoded = decode(r.p);
  return r;
}

inline FfPassResult ff_autoencoder_pass(const FfAutoencoder& model, Message m,
                                        PassKind kind, const ChannelConfig& cfg,
                                        RngStream& rng) {
  return ff_autoencoder_pass(model, m, kind, cfg, model.stage, rng);
}

// ---------------------------------------------------------------------------
// Batched helpers shared by training and evaluation

// Applies the output stage row-wise in place.
inline void stage_rows(OutputStage stage, Mat& X) {
  if (stage == OutputStage::quantize) {
    for (double& v : X.a) v = v >= 0.0 ? 1.0 : -1.0;
    return;
  }
  const double root_n = std::sqrt(static_cast<double>(X.cols));
  for (std::size_t b = 0; b < X.rows; ++b) {
    double* row = X.row(b);
    const double norm = l2_norm(row, X.cols);
    if (norm <= kNormEps) throw std::domain_error("stage_rows: zero-energy encoder output");
    const double s = root_n / norm;
    for (std::size_t j = 0; j < X.cols; ++j) row[j] *= s;
  }
}

// Applies the channel row-wise in place; optionally reports per-row fading.
inline void channel_rows(const ChannelConfig& cfg, Mat& X, RngStream& rng, Vec* h_out) {
  const double sigma = std::sqrt(cfg.noise_variance());
  if (h_out) h_out->assign(X.rows, 1.0);
  for (std::size_t b = 0; b < X.rows; ++b) {
    const double h = draw_fading(cfg, rng);
    if (h_out) (*h_out)[b] = h;
    double* row = X.row(b);
    if (sigma > 0.0) {
      for (std::size_t j = 0; j < X.cols; ++j)
        row[j] = h * row[j] + sigma * rng.next_gaussian();
    } else if (h != 1.0) {
      for (std::size_t j = 0; j < X.cols; ++j) row[j] *= h;
    }
  }
}

// Lean batched pass through a forward-forward stack: input rows normalized on
// entry, each layer's activity re-normalized before the next layer. If
// `concat` is given it receives all normalized activities side by side.
inline Mat ff_stack_infer_batch(const std::vector<DenseLayer>& stack, Mat X,
                                Mat* concat = nullptr) {
  rms_normalize_rows_inplace(X);
  std::size_t col0 = 0;
  if (concat) {
    std::size_t total = 0;
    for (const auto& l : stack) total += l.out();
    *concat = Mat(X.rows, total);
  }
  for (const auto& layer : stack) {
    Mat Z(X.rows, layer.out());
    matmul_nt(X, layer.W, Z);
    for (std::size_t b = 0; b < Z.rows; ++b) {
      double* row = Z.row(b);
      for (std::size_t j = 0; j < layer.out(); ++j) row[j] += layer.b[j];
    }
    if (layer.act == Activation::relu)
      for (double& v : Z.a) v = std::max(v, 0.0);
    rms_normalize_rows_inplace(Z);
    if (concat) {
      for (std::size_t b = 0; b < Z.rows; ++b) {
        const double* src = Z.row(b);
        double* dst = concat->row(b) + col0;
        for (std::size_t j = 0; j < layer.out(); ++j) dst[j] = src[j];
      }
      col0 += layer.out();
    }
    X = std::move(Z);
  }
  return X;
}

// Plain batched MLP pass; records tapes when requested.
inline Mat bp_stack_forward_batch(const std::vector<DenseLayer>& stack, Mat X,
                                  std::vector<LayerBatchTape>* tapes = nullptr) {
  if (tapes) tapes->clear();
  for (const auto& layer : stack) {
    LayerBatchTape t = dense_forward_batch(layer, std::move(X));
    X = t.act;
    if (tapes) tapes->push_back(std::move(t));
  }
  return X;
}

inline Mat classifier_logits_batch(const DenseLayer& classifier, const Mat& concat) {
  Mat logits(concat.rows, classifier.out());
  matmul_nt(concat, classifier.W, logits);
  for (std::size_t b = 0; b < logits.rows; ++b) {
    double* row = logits.row(b);
    for (std::size_t j = 0; j < classifier.out(); ++j) row[j] += classifier.b[j];
  }
  return logits;
}

inline std::size_t count_argmax_errors(const Mat& logits, std::span<const Message> msgs) {
  std::size_t errors = 0;
  for (std::size_t b = 0; b < logits.rows; ++b) {
    const double* row = logits.row(b);
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols; ++j)
      if (row[j] > row[best]) best = j;
    if (best != msgs[b]) ++errors;
  }
  return errors;
}

// Inference with the neutral label; returns the number of block errors.
inline std::size_t ff_count_block_errors(const FfAutoencoder& model,
                                         std::span<const Message> msgs,
                                         const ChannelConfig& cfg, RngStream& rng) {
  Mat X = build_input_batch(msgs, PassKind::neutral, rng, model.code.q);
  Mat enc_out = ff_stack_infer_batch(model.encoder, std::move(X));
  stage_rows(model.stage, enc_out);
  channel_rows(cfg, enc_out, rng, nullptr);
  Mat concat;
  ff_stack_infer_batch(model.decoder, std::move(enc_out), &concat);
  const Mat logits = classifier_logits_batch(model.classifier, concat);
  return count_argmax_errors(logits, msgs);
}

inline std::size_t bp_count_block_errors(const BpAutoencoder& model,
                                         std::span<const Message> msgs,
                                         const ChannelConfig& cfg, RngStream& rng) {
  Mat X = one_hot_batch(msgs, model.code.q);
  Mat enc_out = bp_stack_forward_batch(model.encoder, std::move(X));
  stage_rows(model.quantize ? OutputStage::quantize : OutputStage::normalize, enc_out);
  channel_rows(cfg, enc_out, rng, nullptr);
  const Mat logits = bp_stack_forward_batch(model.decoder, std::move(enc_out));
  return count_argmax_errors(logits, msgs);
}

// ---------------------------------------------------------------------------
// Per-sample backprop pipeline (live and frozen-channel variants)

struct BpForward {
  std::vector<LayerTape> enc_tapes, dec_tapes;
  Vec a_enc;  // encoder output before the output stage
  Codeword x;
  double h = 1.0;
  Vec y;
  Vec logits;
  Vec p;
  double cce = 0.0;
  Message decoded = 0;
};

// Quantizer forward used when evaluating the pipeline. `hard` is the real
// sign() mapping; `saturating` clips to [-1, 1] instead, which is the exact
// primitive the straight-through backward rule differentiates and is what
// finite-difference checks of the quantized path must run against.
enum class QuantizerMode { hard, saturating };

struct FrozenChannel {
  double h = 1.0;
  Vec noise;  // length n, added after fading
};

namespace detail {

inline BpForward bp_forward_impl(const BpAutoencoder& model, Message m,
                                 const FrozenChannel& frozen, QuantizerMode qmode) {
  BpForward r;
  Vec x = one_hot(m, model.code.q);
  for (const auto& layer : model.encoder) {
    r.enc_tapes.push_back(dense_forward(layer, x));
    x = r.enc_tapes.back().act;
  }
  r.a_enc = x;
  if (!model.quantize) {
    r.x = normalize_power(r.a_enc);
  } else if (qmode == QuantizerMode::hard) {
    r.x = quantize_sign(r.a_enc);
  } else {
    r.x.symbols.resize(r.a_enc.size());
    for (std::size_t i = 0; i < r.a_enc.size(); ++i)
      r.x.symbols[i] = std::clamp(r.a_enc[i], -1.0, 1.0);
  }
  r.h = frozen.h;
  r.y.resize(r.x.symbols.size());
  for (std::size_t i = 0; i < r.x.symbols.size(); ++i)
    r.y[i] = frozen.h * r.x.symbols[i] + frozen.noise[i];
  Vec d = r.y;
  for (const auto& layer : model.decoder) {
    r.dec_tapes.push_back(dense_forward(layer, d));
    d = r.dec_tapes.back().act;
  }
  r.logits = std::move(d);
  SoftmaxCce sm = softmax_cce(r.logits, m);
  r.p = std::move(sm.p);
  r.cce = sm.loss;
  r.decoded = decode(r.p);
  return r;
}

}  // namespace detail

inline BpForward bp_autoencoder_forward_frozen(const BpAutoencoder& model, Message m,
                                               const FrozenChannel& frozen,
                                               QuantizerMode qmode = QuantizerMode::hard) {
  if (frozen.noise.size() != model.code.n)
    throw std::invalid_argument("bp_autoencoder_forward_frozen: noise length mismatch");
  return detail::bp_forward_impl(model, m, frozen, qmode);
}

inline BpForward bp_autoencoder_forward(const BpAutoencoder& model, Message m,
                                        const ChannelConfig& cfg, RngStream& rng) {
  if (cfg.n != model.code.n)
    throw std::invalid_argument("bp_autoencoder_forward: channel blocklength mismatch");
  FrozenChannel frozen;
  frozen.h = draw_fading(cfg, rng);
  const double sigma = std::sqrt(cfg.noise_variance());
  frozen.noise = sigma > 0.0 ? sample_gaussian(rng, 0.0, sigma, cfg.n) : Vec(cfg.n, 0.0);
  return detail::bp_forward_impl(model, m, frozen, QuantizerMode::hard);
}

struct BpPipelineGrads {
  std::vector<LayerGrad> encoder, decoder;
};

// Analytic gradient of the end-to-end CCE for one sample under a fixed
// channel realization. The quantized path applies the straight-through mask
// at the encoder output; the continuous path applies the power-normalization
// Jacobian.
inline BpPipelineGrads bp_pipeline_backward(const BpAutoencoder& model, Message m,
                                            const FrozenChannel& frozen,
                                            QuantizerMode qmode = QuantizerMode::hard) {
  const BpForward f = bp_autoencoder_forward_frozen(model, m, frozen, qmode);
  BpPipelineGrads g;
  Vec dlogits = f.p;
  dlogits[m] -= 1.0;
  StackGrads dec = bp_backward(model.decoder, f.dec_tapes, std::move(dlogits));
  g.decoder = std::move(dec.layers);
  Vec dx = std::move(dec.dinput);
  for (double& v : dx) v *= frozen.h;
  Vec da = model.quantize ? ste_backward(f.a_enc, dx)
                          : normalize_power_backward(f.a_enc, dx);
  StackGrads enc = bp_backward(model.encoder, f.enc_tapes, std::move(da));
  g.encoder = std::move(enc.layers);
  return g;
}

inline double bp_pipeline_loss(const BpAutoencoder& model, Message m,
                               const FrozenChannel& frozen,
                               QuantizerMode qmode = QuantizerMode::hard) {
  return bp_autoencoder_forward_frozen(model, m, frozen, qmode).cce;
}

}  // namespace ffae
