#pragma once

// The three trainers. Forward-forward: per-layer SGD on layer-local goodness
// losses from a positive and a negative pass, plus a separate SGD step for
// the classifier on the neutral pass. Backprop: one Adam step per batch on
// the end-to-end cross-entropy, with the straight-through mask when the
// output is quantized. Backprop-RL: alternating decoder rounds (true
// gradient) and encoder rounds (score-function gradient through Gaussian
// exploration of the transmitted block), so nothing differentiates through
// the channel.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffae/models.hpp"
#include "ffae/optim.hpp"

namespace ffae {

enum class Algo { ff, bp, bp_rl };

// Fixed stream ids: every stochastic ingredient of a run owns a substream of
// the run seed, so e.g. the evaluation cadence can change without perturbing
// the training trajectory.
namespace stream_id {
inline constexpr std::uint64_t init = 0;
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t channel = 2;
inline constexpr std::uint64_t rl = 3;
inline constexpr std::uint64_t eval_messages = 4;
inline constexpr std::uint64_t eval_noise_base = std::uint64_t{1} << 20;
}  // namespace stream_id

struct TrainConfig {
  Algo algo = Algo::ff;
  ChannelKind channel = ChannelKind::awgn;
  OutputStage stage = OutputStage::normalize;
  double train_ebn0_db = 5.0;
  unsigned k = 4;
  std::size_t n = 7;
  std::size_t enc_layers = 4, dec_layers = 4, width = 80;
  std::size_t max_iters = 8200;
  std::size_t batch = 250;
  // forward-forward SGD
  double lr_ff = 0.001, lr_cls = 0.005;
  double wd_ff = 0.0003, wd_cls = 0.003;
  double mom_ff = 0.9, mom_cls = 0.9;
  // backprop Adam
  double lr_adam = 0.001;
  std::uint64_t seed = 1;
  std::size_t eval_stride = 5;
  std::size_t eval_size = 1000;
  std::size_t checkpoint_every = 0;

  CodeParams code() const { return CodeParams::make(k, n); }
  ChannelConfig channel_config() const { return {channel, code().rate(), train_ebn0_db, n}; }

  static TrainConfig defaults(Algo algo) {
    TrainConfig c;
    c.algo = algo;
    switch (algo) {
      case Algo::ff:
        c.enc_layers = c.dec_layers = 4;
        c.width = 80;
        c.max_iters = 8200;
        c.eval_stride = 5;
        break;
      case Algo::bp:
        c.enc_layers = c.dec_layers = 2;
        c.width = 16;
        c.max_iters = 5000;
        c.eval_stride = 10;
        break;
      case Algo::bp_rl:
        c.enc_layers = c.dec_layers = 2;
        c.width = 16;
        c.max_iters = 18000;
        c.eval_stride = 1;
        break;
    }
    return c;
  }
};

struct RlConfig {
  double sigma_rl = 0.1;   // exploration std
  std::size_t rounds = 10;  // batches per decoder / encoder phase
};

struct TrainLogEntry {
  std::size_t iter = 0;
  double bler = 0.0;
  double cce = 0.0;
  Vec layer_losses;  // per-layer mean contrastive loss (FF only)
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
};

using FfSnapshotHook = std::function<void(std::size_t, const FfAutoencoder&)>;
using BpSnapshotHook = std::function<void(std::size_t, const BpAutoencoder&)>;
using LogHook = std::function<void(const TrainLogEntry&)>;

struct FfTrainResult {
  FfAutoencoder model;
  TrainLog log;
};

struct BpTrainResult {
  BpAutoencoder model;
  TrainLog log;
};

namespace detail {

inline void check_finite(double v, const char* what, std::size_t iter) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("training diverged: non-finite ") + what +
                             " at iteration " + std::to_string(iter));
}

inline std::vector<Message> sample_messages(RngStream& rng, std::size_t count,
                                            std::size_t q) {
  std::vector<Message> msgs(count);
  for (auto& m : msgs) m = static_cast<Message>(rng.next_below(q));
  return msgs;
}

struct FfGradAccum {
  std::vector<LayerGrad> encoder, decoder;

  explicit FfGradAccum(const FfAutoencoder& m) {
    for (const auto& l : m.encoder) encoder.emplace_back(l);
    for (const auto& l : m.decoder) decoder.emplace_back(l);
  }
  void zero() {
    for (auto& g : encoder) g.zero();
    for (auto& g : decoder) g.zero();
  }
};

// One contrastive pass over a batch. Accumulates 1/B-scaled layer-local
// gradients and adds each layer's mean loss into `mean_losses`
// (encoder layers first, then decoder layers).
inline void ff_contrastive_pass(const FfAutoencoder& model,
                                std::span<const Message> msgs, PassKind kind,
                                const ChannelConfig& cfg, RngStream& data_rng,
                                RngStream& chan_rng, FfGradAccum& acc,
                                Vec& mean_losses) {
  const Polarity pol =
      kind == PassKind::positive ? Polarity::positive : Polarity::negative;
  const double inv_b = 1.0 / static_cast<double>(msgs.size());
  Mat X = build_input_batch(msgs, kind, data_rng, model.code.q);
  rms_normalize_rows_inplace(X);
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    LayerBatchTape t = dense_forward_batch(model.encoder[i], std::move(X));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < t.goodness.size(); ++b)
      loss_sum += ff_layer_loss(t.goodness[b], model.encoder_tau[i], pol);
    if (!std::isfinite(loss_sum))
      throw std::runtime_error("training diverged: non-finite encoder layer loss");
    mean_losses[i] += loss_sum * inv_b;
    ff_layer_grad_batch(model.encoder[i], t, model.encoder_tau[i], pol, inv_b,
                        acc.encoder[i]);
    X = rms_normalize_rows(t.act, t.norm);
  }
  stage_rows(model.stage, X);
  channel_rows(cfg, X, chan_rng, nullptr);
  rms_normalize_rows_inplace(X);
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    LayerBatchTape t = dense_forward_batch(model.decoder[i], std::move(X));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < t.goodness.size(); ++b)
      loss_sum += ff_layer_loss(t.goodness[b], model.decoder_tau[i], pol);
    if (!std::isfinite(loss_sum))
      throw std::runtime_error("training diverged: non-finite decoder layer loss");
    mean_losses[model.encoder.size() + i] += loss_sum * inv_b;
    ff_layer_grad_batch(model.decoder[i], t, model.decoder_tau[i], pol, inv_b,
                        acc.decoder[i]);
    X = rms_normalize_rows(t.act, t.norm);
  }
}

// Row-wise softmax cross-entropy; fills dlogits with (p - one_hot)*scale and
// returns the mean loss.
inline double softmax_cce_rows(const Mat& logits, std::span<const Message> msgs,
                               double scale, Mat& dlogits) {
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < logits.rows; ++b) {
    const double* row = logits.row(b);
    double mx = row[0];
    for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    double* d = dlogits.row(b);
    for (std::size_t j = 0; j < logits.cols; ++j) {
      d[j] = std::exp(row[j] - mx);
      z += d[j];
    }
    const double inv_z = 1.0 / z;
    for (std::size_t j = 0; j < logits.cols; ++j) d[j] *= inv_z;
    loss_sum += -std::log(d[msgs[b]]);
    d[msgs[b]] -= 1.0;
    for (std::size_t j = 0; j < logits.cols; ++j) d[j] *= scale;
  }
  return loss_sum / static_cast<double>(logits.rows);
}

// Neutral pass + classifier SGD step; returns the mean CCE.
inline double ff_classifier_step(FfAutoencoder& model, std::span<const Message> msgs,
                                 const ChannelConfig& cfg, RngStream& chan_rng,
                                 SgdState& cls_state, LayerGrad& cls_grad) {
  RngStream unused(0, 0);  // neutral inputs draw nothing
  Mat X = build_input_batch(msgs, PassKind::neutral, unused, model.code.q);
  Mat enc_out = ff_stack_infer_batch(model.encoder, std::move(X));
  stage_rows(model.stage, enc_out);
  channel_rows(cfg, enc_out, chan_rng, nullptr);
  Mat concat;
  ff_stack_infer_batch(model.decoder, std::move(enc_out), &concat);
  Mat logits = classifier_logits_batch(model.classifier, concat);
  Mat dlogits(logits.rows, logits.cols);
  const double cce =
      softmax_cce_rows(logits, msgs, 1.0 / static_cast<double>(msgs.size()), dlogits);
  cls_grad.zero();
  matmul_tn_acc(dlogits, concat, 1.0, cls_grad.dW);
  for (std::size_t b = 0; b < dlogits.rows; ++b) {
    const double* d = dlogits.row(b);
    for (std::size_t j = 0; j < dlogits.cols; ++j) cls_grad.db[j] += d[j];
  }
  sgd_step(model.classifier, cls_grad, cls_state);
  return cce;
}

inline double eval_bler_ff(const FfAutoencoder& model,
                           std::span<const Message> eval_msgs, const ChannelConfig& cfg,
                           std::uint64_t seed, std::size_t log_index) {
  RngStream rng(seed, stream_id::eval_noise_base + log_index);
  const std::size_t errors = ff_count_block_errors(model, eval_msgs, cfg, rng);
  return static_cast<double>(errors) / static_cast<double>(eval_msgs.size());
}

inline double eval_bler_bp(const BpAutoencoder& model,
                           std::span<const Message> eval_msgs, const ChannelConfig& cfg,
                           std::uint64_t seed, std::size_t log_index) {
  RngStream rng(seed, stream_id::eval_noise_base + log_index);
  const std::size_t errors = bp_count_block_errors(model, eval_msgs, cfg, rng);
  return static_cast<double>(errors) / static_cast<double>(eval_msgs.size());
}

// One bp-rl decoder phase: `rounds` batches trained with the true end-to-end
// gradient, decoder parameters only. Returns the mean CCE across the phase.
inline double bp_rl_decoder_phase(BpAutoencoder& model, const TrainConfig& cfg,
                                  const RlConfig& rl, const ChannelConfig& chan,
                                  RngStream& data_rng, RngStream& chan_rng,
                                  std::vector<AdamState>& dec_states,
                                  std::vector<LayerGrad>& dec_grads, std::size_t iter) {
  const double inv_b = 1.0 / static_cast<double>(cfg.batch);
  const OutputStage stage =
      model.quantize ? OutputStage::quantize : OutputStage::normalize;
  double phase_cce = 0.0;
  for (std::size_t r = 0; r < rl.rounds; ++r) {
    const std::vector<Message> msgs = sample_messages(data_rng, cfg.batch, model.code.q);
    std::vector<LayerBatchTape> dec_tapes;
    Mat A = bp_stack_forward_batch(model.encoder, one_hot_batch(msgs, model.code.q));
    stage_rows(stage, A);
    channel_rows(chan, A, chan_rng, nullptr);
    Mat logits = bp_stack_forward_batch(model.decoder, std::move(A), &dec_tapes);
    Mat dlogits(logits.rows, logits.cols);
    const double cce = softmax_cce_rows(logits, msgs, inv_b, dlogits);
    check_finite(cce, "decoder-phase loss", iter);
    phase_cce += cce / static_cast<double>(rl.rounds);
    for (auto& g : dec_grads) g.zero();
    bp_backward_batch(model.decoder, dec_tapes, std::move(dlogits), dec_grads);
    for (std::size_t i = 0; i < model.decoder.size(); ++i)
      adam_step(model.decoder[i], dec_grads[i], dec_states[i]);
  }
  return phase_cce;
}

// One bp-rl encoder phase: `rounds` batches trained with the score-function
// surrogate J = (1/B) sum_b loss_b * log p(tx_b | mean_b) under Gaussian
// exploration, encoder parameters only. Nothing differentiates through the
// perturbation, the quantizer or the channel.
inline void bp_rl_encoder_phase(BpAutoencoder& model, const TrainConfig& cfg,
                                const RlConfig& rl, const ChannelConfig& chan,
                                RngStream& data_rng, RngStream& chan_rng,
                                RngStream& rl_rng, std::vector<AdamState>& enc_states,
                                std::vector<LayerGrad>& enc_grads, std::size_t iter) {
  const double inv_b = 1.0 / static_cast<double>(cfg.batch);
  for (std::size_t r = 0; r < rl.rounds; ++r) {
    const std::vector<Message> msgs = sample_messages(data_rng, cfg.batch, model.code.q);
    std::vector<LayerBatchTape> enc_tapes;
    Mat A = bp_stack_forward_batch(model.encoder, one_hot_batch(msgs, model.code.q),
                                   &enc_tapes);
    // Policy mean: the normalized block for the continuous system, the raw
    // encoder output when the non-differentiable quantizer belongs to the
    // channel black box.
    Mat mean = A;
    if (!model.quantize) stage_rows(OutputStage::normalize, mean);
    Mat w(mean.rows, mean.cols);
    for (auto& v : w.a) v = rl_rng.next_gaussian();
    Mat tx(mean.rows, mean.cols);
    for (std::size_t idx = 0; idx < tx.a.size(); ++idx)
      tx.a[idx] = mean.a[idx] + rl.sigma_rl * w.a[idx];
    if (model.quantize)
      for (auto& v : tx.a) v = v >= 0.0 ? 1.0 : -1.0;
    channel_rows(chan, tx, chan_rng, nullptr);
    const Mat logits = bp_stack_forward_batch(model.decoder, std::move(tx));
    Vec losses(logits.rows);
    for (std::size_t b = 0; b < logits.rows; ++b) {
      const double* row = logits.row(b);
      double mx = row[0];
      for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < logits.cols; ++j) z += std::exp(row[j] - mx);
      losses[b] = -(row[msgs[b]] - mx - std::log(z));
    }
    // dJ/dmean_b = loss_b * w_b / (B * sigma); loss and perturbation are
    // constants of the surrogate.
    Mat dmean(mean.rows, mean.cols);
    double surrogate = 0.0;
    const double scale = inv_b / rl.sigma_rl;
    for (std::size_t b = 0; b < mean.rows; ++b) {
      const double* wb = w.row(b);
      double* d = dmean.row(b);
      double wsq = 0.0;
      for (std::size_t j = 0; j < mean.cols; ++j) {
        d[j] = losses[b] * wb[j] * scale;
        wsq += wb[j] * wb[j];
      }
      surrogate += losses[b] * (-0.5 * wsq) * inv_b;
    }
    check_finite(surrogate, "encoder surrogate", iter);
    Mat da(mean.rows, mean.cols);
    if (model.quantize) {
      da = std::move(dmean);
    } else {
      for (std::size_t b = 0; b < mean.rows; ++b) {
        const Vec a_row(enc_tapes.back().act.row(b),
                        enc_tapes.back().act.row(b) + mean.cols);
        const Vec dx_row(dmean.row(b), dmean.row(b) + mean.cols);
        const Vec da_row = normalize_power_backward(a_row, dx_row);
        for (std::size_t j = 0; j < mean.cols; ++j) da(b, j) = da_row[j];
      }
    }
    for (auto& g : enc_grads) g.zero();
    bp_backward_batch(model.encoder, enc_tapes, std::move(da), enc_grads);
    for (std::size_t i = 0; i < model.encoder.size(); ++i)
      adam_step(model.encoder[i], enc_grads[i], enc_states[i]);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward-forward trainer

inline FfTrainResult train_ff_from(FfAutoencoder model, const TrainConfig& cfg,
                                   const FfSnapshotHook& snapshot = {},
                                   const LogHook& on_log = {}) {
  const ChannelConfig chan = cfg.channel_config();
  RngStream data_rng(cfg.seed, stream_id::data);
  RngStream chan_rng(cfg.seed, stream_id::channel);
  RngStream eval_rng(cfg.seed, stream_id::eval_messages);
  const std::vector<Message> eval_msgs =
      detail::sample_messages(eval_rng, cfg.eval_size, model.code.q);

  std::vector<SgdState> enc_states, dec_states;
  for (const auto& l : model.encoder)
    enc_states.emplace_back(cfg.lr_ff, cfg.wd_ff, cfg.mom_ff, l);
  for (const auto& l : model.decoder)
    dec_states.emplace_back(cfg.lr_ff, cfg.wd_ff, cfg.mom_ff, l);
  SgdState cls_state(cfg.lr_cls, cfg.wd_cls, cfg.mom_cls, model.classifier);
  LayerGrad cls_grad(model.classifier);

  detail::FfGradAccum acc(model);
  TrainLog log;
  const std::size_t layer_count = model.encoder.size() + model.decoder.size();

  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    const std::vector<Message> msgs =
        detail::sample_messages(data_rng, cfg.batch, model.code.q);
    acc.zero();
    Vec mean_losses(layer_count, 0.0);
    detail::ff_contrastive_pass(model, msgs, PassKind::positive, chan, data_rng,
                                chan_rng, acc, mean_losses);
    detail::ff_contrastive_pass(model, msgs, PassKind::negative, chan, data_rng,
                                chan_rng, acc, mean_losses);
    for (std::size_t i = 0; i < model.encoder.size(); ++i)
      sgd_step(model.encoder[i], acc.encoder[i], enc_states[i]);
    for (std::size_t i = 0; i < model.decoder.size(); ++i)
      sgd_step(model.decoder[i], acc.decoder[i], dec_states[i]);
    const double cce =
        detail::ff_classifier_step(model, msgs, chan, chan_rng, cls_state, cls_grad);
    for (double v : mean_losses) detail::check_finite(v, "layer loss", iter);
    detail::check_finite(cce, "classifier loss", iter);

    if (cfg.eval_stride > 0 && iter % cfg.eval_stride == 0) {
      TrainLogEntry e;
      e.iter = iter;
      e.bler = detail::eval_bler_ff(model, eval_msgs, chan, cfg.seed,
                                    iter / cfg.eval_stride);
      e.cce = cce;
      e.layer_losses = std::move(mean_losses);
      if (on_log) on_log(e);
      log.entries.push_back(std::move(e));
    }
    if (snapshot && cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0)
      snapshot(iter, model);
  }
  return {std::move(model), std::move(log)};
}

inline FfTrainResult train_ff(const TrainConfig& cfg, const FfSnapshotHook& snapshot = {},
                              const LogHook& on_log = {}) {
  if (cfg.algo != Algo::ff) throw std::invalid_argument("train_ff: config algo mismatch");
  RngStream init_rng(cfg.seed, stream_id::init);
  FfAutoencoder model = FfAutoencoder::create(cfg.code(), cfg.enc_layers, cfg.dec_layers,
                                              cfg.width, cfg.stage, init_rng);
  return train_ff_from(std::move(model), cfg, snapshot, on_log);
}

// ---------------------------------------------------------------------------
// Backprop trainer

inline BpTrainResult train_bp_from(BpAutoencoder model, const TrainConfig& cfg,
                                   const BpSnapshotHook& snapshot = {},
                                   const LogHook& on_log = {}) {
  const ChannelConfig chan = cfg.channel_config();
  RngStream data_rng(cfg.seed, stream_id::data);
  RngStream chan_rng(cfg.seed, stream_id::channel);
  RngStream eval_rng(cfg.seed, stream_id::eval_messages);
  const std::vector<Message> eval_msgs =
      detail::sample_messages(eval_rng, cfg.eval_size, model.code.q);

  std::vector<AdamState> enc_states, dec_states;
  for (const auto& l : model.encoder) enc_states.emplace_back(cfg.lr_adam, l);
  for (const auto& l : model.decoder) dec_states.emplace_back(cfg.lr_adam, l);
  std::vector<LayerGrad> enc_grads, dec_grads;
  for (const auto& l : model.encoder) enc_grads.emplace_back(l);
  for (const auto& l : model.decoder) dec_grads.emplace_back(l);

  TrainLog log;
  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    const std::vector<Message> msgs =
        detail::sample_messages(data_rng, cfg.batch, model.code.q);
    std::vector<LayerBatchTape> enc_tapes, dec_tapes;
    Mat A = bp_stack_forward_batch(model.encoder, one_hot_batch(msgs, model.code.q),
                                   &enc_tapes);
    const Mat a_enc = A;  // pre-stage copy for the backward rules
    stage_rows(model.quantize ? OutputStage::quantize : OutputStage::normalize, A);
    Vec h;
    channel_rows(chan, A, chan_rng, &h);
    Mat logits = bp_stack_forward_batch(model.decoder, std::move(A), &dec_tapes);
    Mat dlogits(logits.rows, logits.cols);
    const double cce = detail::softmax_cce_rows(
        logits, msgs, 1.0 / static_cast<double>(msgs.size()), dlogits);
    detail::check_finite(cce, "loss", iter);

    for (auto& g : enc_grads) g.zero();
    for (auto& g : dec_grads) g.zero();
    Mat dy = bp_backward_batch(model.decoder, dec_tapes, std::move(dlogits), dec_grads);
    for (std::size_t b = 0; b < dy.rows; ++b) {
      double* row = dy.row(b);
      for (std::size_t j = 0; j < dy.cols; ++j) row[j] *= h[b];
    }
    Mat da(dy.rows, dy.cols);
    if (model.quantize) {
      for (std::size_t idx = 0; idx < dy.a.size(); ++idx)
        da.a[idx] = std::abs(a_enc.a[idx]) < 1.0 ? dy.a[idx] : 0.0;
    } else {
      for (std::size_t b = 0; b < dy.rows; ++b) {
        const Vec a_row(a_enc.row(b), a_enc.row(b) + a_enc.cols);
        const Vec dx_row(dy.row(b), dy.row(b) + dy.cols);
        const Vec da_row = normalize_power_backward(a_row, dx_row);
        for (std::size_t j = 0; j < da.cols; ++j) da(b, j) = da_row[j];
      }
    }
    bp_backward_batch(model.encoder, enc_tapes, std::move(da), enc_grads);
    for (std::size_t i = 0; i < model.encoder.size(); ++i)
      adam_step(model.encoder[i], enc_grads[i], enc_states[i]);
    for (std::size_t i = 0; i < model.decoder.size(); ++i)
      adam_step(model.decoder[i], dec_grads[i], dec_states[i]);

    if (cfg.eval_stride > 0 && iter % cfg.eval_stride == 0) {
      TrainLogEntry e;
      e.iter = iter;
      e.bler = detail::eval_bler_bp(model, eval_msgs, chan, cfg.seed,
                                    iter / cfg.eval_stride);
      e.cce = cce;
      if (on_log) on_log(e);
      log.entries.push_back(std::move(e));
    }
    if (snapshot && cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0)
      snapshot(iter, model);
  }
  return {std::move(model), std::move(log)};
}

inline BpTrainResult train_bp(const TrainConfig& cfg, const BpSnapshotHook& snapshot = {},
                              const LogHook& on_log = {}) {
  if (cfg.algo != Algo::bp) throw std::invalid_argument("train_bp: config algo mismatch");
  RngStream init_rng(cfg.seed, stream_id::init);
  BpAutoencoder model =
      BpAutoencoder::create(cfg.code(), cfg.enc_layers, cfg.dec_layers, cfg.width,
                            cfg.stage == OutputStage::quantize, init_rng);
  return train_bp_from(std::move(model), cfg, snapshot, on_log);
}

// ---------------------------------------------------------------------------
// Backprop-RL trainer (alternating decoder / encoder phases)

inline BpTrainResult train_bp_rl_from(BpAutoencoder model, const TrainConfig& cfg,
                                      const RlConfig& rl,
                                      const BpSnapshotHook& snapshot = {},
                                      const LogHook& on_log = {}) {
  if (!(rl.sigma_rl > 0.0))
    throw std::invalid_argument("train_bp_rl: sigma_rl must be positive");
  const ChannelConfig chan = cfg.channel_config();
  RngStream data_rng(cfg.seed, stream_id::data);
  RngStream chan_rng(cfg.seed, stream_id::channel);
  RngStream rl_rng(cfg.seed, stream_id::rl);
  RngStream eval_rng(cfg.seed, stream_id::eval_messages);
  const std::vector<Message> eval_msgs =
      detail::sample_messages(eval_rng, cfg.eval_size, model.code.q);

  std::vector<AdamState> enc_states, dec_states;
  for (const auto& l : model.encoder) enc_states.emplace_back(cfg.lr_adam, l);
  for (const auto& l : model.decoder) dec_states.emplace_back(cfg.lr_adam, l);
  std::vector<LayerGrad> enc_grads, dec_grads;
  for (const auto& l : model.encoder) enc_grads.emplace_back(l);
  for (const auto& l : model.decoder) dec_grads.emplace_back(l);

  TrainLog log;

  // One iteration = one full alternation: `rounds` decoder batches with the
  // true gradient, then `rounds` encoder batches with the score-function
  // surrogate, which is also the unit the convergence log uses.
  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    const double dec_cce = detail::bp_rl_decoder_phase(model, cfg, rl, chan, data_rng,
                                                       chan_rng, dec_states, dec_grads,
                                                       iter);
    detail::bp_rl_encoder_phase(model, cfg, rl, chan, data_rng, chan_rng, rl_rng,
                                enc_states, enc_grads, iter);

    if (cfg.eval_stride > 0 && iter % cfg.eval_stride == 0) {
      TrainLogEntry e;
      e.iter = iter;
      e.bler = detail::eval_bler_bp(model, eval_msgs, chan, cfg.seed,
                                    iter / cfg.eval_stride);
      e.cce = dec_cce;
      if (on_log) on_log(e);
      log.entries.push_back(std::move(e));
    }
    if (snapshot && cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0)
      snapshot(iter, model);
  }
  return {std::move(model), std::move(log)};
}

inline BpTrainResult train_bp_rl(const TrainConfig& cfg, const RlConfig& rl,
                                 const BpSnapshotHook& snapshot = {},
                                 const LogHook& on_log = {}) {
  if (cfg.algo != Algo::bp_rl)
    throw std::invalid_argument("train_bp_rl: config algo mismatch");
  RngStream init_rng(cfg.seed, stream_id::init);
  BpAutoencoder model =
      BpAutoencoder::create(cfg.code(), cfg.enc_layers, cfg.dec_layers, cfg.width,
                            cfg.stage == OutputStage::quantize, init_rng);
  return train_bp_rl_from(std::move(model), cfg, rl, snapshot, on_log);
}

}  // namespace ffae
