#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ffae/checkpoint.hpp"
#include "ffae/eval.hpp"
#include "ffae/training.hpp"

using namespace ffae;

namespace {

TrainConfig toy_config(Algo algo) {
  TrainConfig cfg = TrainConfig::defaults(algo);
  cfg.k = 2;
  cfg.n = 3;
  cfg.enc_layers = cfg.dec_layers = 2;
  cfg.width = 16;
  cfg.train_ebn0_db = std::numeric_limits<double>::infinity();  // noiseless
  cfg.eval_stride = 0;
  cfg.eval_size = 64;
  return cfg;
}

std::size_t noiseless_errors_ff(const FfAutoencoder& m) {
  std::vector<Message> all;
  for (Message v = 0; v < m.code.q; ++v) all.push_back(v);
  RngStream rng(9, 9);
  const ChannelConfig cfg{ChannelKind::awgn, m.code.rate(),
                          std::numeric_limits<double>::infinity(), m.code.n};
  return ff_count_block_errors(m, all, cfg, rng);
}

std::size_t noiseless_errors_bp(const BpAutoencoder& m) {
  std::vector<Message> all;
  for (Message v = 0; v < m.code.q; ++v) all.push_back(v);
  RngStream rng(9, 9);
  const ChannelConfig cfg{ChannelKind::awgn, m.code.rate(),
                          std::numeric_limits<double>::infinity(), m.code.n};
  return bp_count_block_errors(m, all, cfg, rng);
}

}  // namespace

TEST_CASE("per-algorithm hyperparameter defaults") {
  const TrainConfig ff = TrainConfig::defaults(Algo::ff);
  REQUIRE(ff.enc_layers == 4);
  REQUIRE(ff.dec_layers == 4);
  REQUIRE(ff.width == 80);
  REQUIRE(ff.max_iters == 8200);
  REQUIRE(ff.batch == 250);
  REQUIRE(ff.eval_stride == 5);
  const TrainConfig bp = TrainConfig::defaults(Algo::bp);
  REQUIRE(bp.enc_layers == 2);
  REQUIRE(bp.width == 16);
  REQUIRE(bp.max_iters == 5000);
  REQUIRE(bp.eval_stride == 10);
  const TrainConfig rl = TrainConfig::defaults(Algo::bp_rl);
  REQUIRE(rl.max_iters == 18000);
  REQUIRE(rl.eval_stride == 1);
}

TEST_CASE("ff trainer fits a noiseless toy code") {
  TrainConfig cfg = toy_config(Algo::ff);
  cfg.max_iters = 2000;
  const FfTrainResult r = train_ff(cfg);
  REQUIRE(noiseless_errors_ff(r.model) == 0);
}

TEST_CASE("bp trainer fits a noiseless toy code") {
  TrainConfig cfg = toy_config(Algo::bp);
  cfg.max_iters = 500;
  const BpTrainResult r = train_bp(cfg);
  REQUIRE(noiseless_errors_bp(r.model) == 0);
}

TEST_CASE("bp-rl trainer fits a noiseless toy code with a larger budget") {
  TrainConfig cfg = toy_config(Algo::bp_rl);
  cfg.max_iters = 150;  // alternations; 20x batches each vs plain bp
  const BpTrainResult r = train_bp_rl(cfg, RlConfig{});
  REQUIRE(noiseless_errors_bp(r.model) == 0);
}

TEST_CASE("ff updates are layer-local") {
  TrainConfig cfg = TrainConfig::defaults(Algo::ff);
  cfg.k = 3;
  cfg.n = 5;
  cfg.enc_layers = cfg.dec_layers = 2;
  cfg.width = 8;
  RngStream init(5, stream_id::init);
  const FfAutoencoder model = FfAutoencoder::create(cfg.code(), 2, 2, 8,
                                                    OutputStage::normalize, init);
  const ChannelConfig chan = cfg.channel_config();

  RngStream d1(5, 1), c1(5, 2);
  std::vector<Message> msgs = detail::sample_messages(d1, 32, model.code.q);
  detail::FfGradAccum acc(model);
  acc.zero();
  Vec losses(4, 0.0);
  detail::ff_contrastive_pass(model, msgs, PassKind::positive, chan, d1, c1, acc, losses);
  detail::ff_contrastive_pass(model, msgs, PassKind::negative, chan, d1, c1, acc, losses);

  // Zeroing everything except layer j's gradient must reproduce layer j's
  // update bit for bit, and leave every other layer untouched.
  for (std::size_t target = 0; target < 2; ++target) {
    FfAutoencoder full = model, isolated = model;
    std::vector<SgdState> sf, si;
    for (const auto& l : model.encoder) {
      sf.emplace_back(cfg.lr_ff, cfg.wd_ff, cfg.mom_ff, l);
      si.emplace_back(cfg.lr_ff, cfg.wd_ff, cfg.mom_ff, l);
    }
    detail::FfGradAccum masked = acc;
    for (std::size_t i = 0; i < 2; ++i)
      if (i != target) masked.encoder[i].zero();
    for (std::size_t i = 0; i < 2; ++i) {
      sgd_step(full.encoder[i], acc.encoder[i], sf[i]);
      sgd_step(isolated.encoder[i], masked.encoder[i], si[i]);
    }
    REQUIRE(full.encoder[target].W.a == isolated.encoder[target].W.a);
    REQUIRE(full.encoder[target].b == isolated.encoder[target].b);
    // Non-target layers still shrink by weight decay, but see none of the
    // contrastive gradient: a pure-decay step reproduces them exactly.
    for (std::size_t i = 0; i < 2; ++i) {
      if (i == target) continue;
      DenseLayer decay_only = model.encoder[i];
      SgdState st(cfg.lr_ff, cfg.wd_ff, cfg.mom_ff, decay_only);
      LayerGrad zero(decay_only);
      sgd_step(decay_only, zero, st);
      REQUIRE(isolated.encoder[i].W.a == decay_only.W.a);
    }
  }
}

TEST_CASE("classifier step leaves ff parameters untouched") {
  TrainConfig cfg = TrainConfig::defaults(Algo::ff);
  cfg.k = 3;
  cfg.n = 5;
  RngStream init(6, stream_id::init);
  FfAutoencoder model =
      FfAutoencoder::create(cfg.code(), 2, 2, 8, OutputStage::normalize, init);
  const FfAutoencoder before = model;
  RngStream d(6, 1), c(6, 2);
  const std::vector<Message> msgs = detail::sample_messages(d, 16, model.code.q);
  SgdState cls_state(cfg.lr_cls, cfg.wd_cls, cfg.mom_cls, model.classifier);
  LayerGrad cls_grad(model.classifier);
  detail::ff_classifier_step(model, msgs, cfg.channel_config(), c, cls_state, cls_grad);
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    REQUIRE(model.encoder[i].W.a == before.encoder[i].W.a);
    REQUIRE(model.encoder[i].b == before.encoder[i].b);
  }
  for (std::size_t i = 0; i < model.decoder.size(); ++i)
    REQUIRE(model.decoder[i].W.a == before.decoder[i].W.a);
  REQUIRE(model.classifier.W.a != before.classifier.W.a);
}

TEST_CASE("bp-rl phases are isolated") {
  TrainConfig cfg = toy_config(Algo::bp_rl);
  RngStream init(7, stream_id::init);
  BpAutoencoder model = BpAutoencoder::create(cfg.code(), 2, 2, 8, false, init);
  const ChannelConfig chan = cfg.channel_config();
  RngStream data(7, 1), chan_rng(7, 2), rl_rng(7, 3);
  std::vector<AdamState> enc_states, dec_states;
  std::vector<LayerGrad> enc_grads, dec_grads;
  for (const auto& l : model.encoder) {
    enc_states.emplace_back(cfg.lr_adam, l);
    enc_grads.emplace_back(l);
  }
  for (const auto& l : model.decoder) {
    dec_states.emplace_back(cfg.lr_adam, l);
    dec_grads.emplace_back(l);
  }
  const BpAutoencoder before = model;
  detail::bp_rl_decoder_phase(model, cfg, RlConfig{0.1, 3}, chan, data, chan_rng,
                              dec_states, dec_grads, 1);
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    REQUIRE(model.encoder[i].W.a == before.encoder[i].W.a);
    REQUIRE(model.encoder[i].b == before.encoder[i].b);
  }
  const BpAutoencoder after_dec = model;
  detail::bp_rl_encoder_phase(model, cfg, RlConfig{0.1, 3}, chan, data, chan_rng, rl_rng,
                              enc_states, enc_grads, 1);
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    REQUIRE(model.decoder[i].W.a == after_dec.decoder[i].W.a);
    REQUIRE(model.decoder[i].b == after_dec.decoder[i].b);
  }
  REQUIRE(model.encoder[0].W.a != after_dec.encoder[0].W.a);
}

TEST_CASE("score-function gradient estimator is unbiased on a scalar quadratic") {
  // loss(x) = (x - c)^2 with x ~ N(theta, sigma^2): the smoothed objective is
  // (theta - c)^2 + sigma^2, gradient 2(theta - c). The estimator
  // loss(theta + sigma z) * z / sigma must match it in expectation.
  const double theta = 0.7, c = 0.2, sigma = 0.1;
  const double true_grad = 2.0 * (theta - c);
  RngStream rng(8, 0);
  const std::size_t draws = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double z = rng.next_gaussian();
    const double x = theta + sigma * z;
    const double est = (x - c) * (x - c) * z / sigma;
    sum += est;
    sum_sq += est * est;
  }
  const double mean = sum / draws;
  const double var = sum_sq / draws - mean * mean;
  const double se = std::sqrt(var / draws);
  REQUIRE(std::abs(mean - true_grad) < 3.0 * se);
}

TEST_CASE("training determinism") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ffae_det_test";
  fs::create_directories(dir);
  auto bytes = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), {});
  };
  TrainConfig cfg = toy_config(Algo::bp);
  cfg.max_iters = 40;
  cfg.eval_stride = 10;
  cfg.eval_size = 128;
  const BpTrainResult a = train_bp(cfg);
  const BpTrainResult b = train_bp(cfg);
  const std::string pa = (dir / "a.ffae").string(), pb = (dir / "b.ffae").string();
  save_checkpoint(pa, a.model);
  save_checkpoint(pb, b.model);
  REQUIRE(bytes(pa) == bytes(pb));
  REQUIRE(a.log.entries.size() == b.log.entries.size());
  for (std::size_t i = 0; i < a.log.entries.size(); ++i)
    REQUIRE(a.log.entries[i].bler == b.log.entries[i].bler);
}

TEST_CASE("untrained models decode at chance level on average") {
  // One random classifier readout of 16 random clusters can deviate from
  // 15/16 by a few percent, so the chance-level property is an ensemble
  // statement: the mean over initializations must sit at (q-1)/q.
  const ChannelConfig cfg{ChannelKind::awgn, 4.0 / 7.0, 5.0, 7};
  double mean_bler = 0.0;
  const int inits = 5;
  for (int s = 0; s < inits; ++s) {
    RngStream init(11 + s, stream_id::init);
    const FfAutoencoder model = FfAutoencoder::create(CodeParams::make(4, 7), 4, 4, 80,
                                                      OutputStage::normalize, init);
    const BlerPoint p =
        estimate_bler(FfLink{&model}, cfg, StopRule{1 << 30, 10000}, 12, s, 2);
    REQUIRE(p.blocks == 10000);
    mean_bler += p.bler / inits;
  }
  REQUIRE(std::abs(mean_bler - 15.0 / 16.0) < 0.02);
}

TEST_CASE("convergence log cadence") {
  TrainConfig cfg = toy_config(Algo::ff);
  cfg.max_iters = 100;
  cfg.eval_stride = 5;
  cfg.eval_size = 32;
  const FfTrainResult r = train_ff(cfg);
  REQUIRE(r.log.entries.size() == 20);  // max_iters / stride
  for (std::size_t i = 0; i < r.log.entries.size(); ++i) {
    REQUIRE(r.log.entries[i].iter == 5 * (i + 1));
    if (i > 0) REQUIRE(r.log.entries[i].iter > r.log.entries[i - 1].iter);
  }
  TrainConfig bp_cfg = toy_config(Algo::bp);
  bp_cfg.max_iters = 100;
  bp_cfg.eval_stride = 10;
  bp_cfg.eval_size = 32;
  REQUIRE(train_bp(bp_cfg).log.entries.size() == 10);
}

TEST_CASE("divergence guard aborts on non-finite state") {
  TrainConfig cfg = toy_config(Algo::ff);
  cfg.max_iters = 5;
  RngStream init(13, stream_id::init);
  FfAutoencoder poisoned = FfAutoencoder::create(cfg.code(), cfg.enc_layers,
                                                 cfg.dec_layers, cfg.width,
                                                 OutputStage::normalize, init);
  poisoned.encoder[0].W(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_WITH(train_ff_from(std::move(poisoned), cfg),
                      Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("trainers reject mismatched algorithms") {
  REQUIRE_THROWS_AS(train_ff(TrainConfig::defaults(Algo::bp)), std::invalid_argument);
  REQUIRE_THROWS_AS(train_bp(TrainConfig::defaults(Algo::ff)), std::invalid_argument);
  REQUIRE_THROWS_AS(train_bp_rl(TrainConfig::defaults(Algo::bp), RlConfig{}),
                    std::invalid_argument);
}
