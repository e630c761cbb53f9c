#pragma once

// Monte-Carlo BLER estimation and the experiment harness around it. Blocks
// are simulated in fixed-size batches, each batch on its own RNG substream
// keyed by (seed, point, batch index), and batch results are reduced in batch
// order — so the estimate is byte-identical no matter how many worker
// threads run the batches.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <future>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffae/models.hpp"
#include "ffae/training.hpp"

namespace ffae {

struct BlerPoint {
  double ebn0_db = 0.0;
  double bler = 0.0;
  std::uint64_t errors = 0;
  std::uint64_t blocks = 0;
};

struct StopRule {
  std::uint64_t min_errors = 100;
  std::uint64_t max_blocks = 1000000;
};

struct SweepSpec {
  std::vector<double> grid;  // Eb/N0 points in dB, strictly increasing
  StopRule stop;

  static SweepSpec default_spec() {
    SweepSpec s;
    for (int db = -4; db <= 20; ++db) s.grid.push_back(static_cast<double>(db));
    return s;
  }
};

// A Link maps `count` random messages through encoder, channel and decoder
// and returns the number of block errors:
//   std::uint64_t link(std::size_t count, const ChannelConfig&, RngStream&)
template <class Link>
BlerPoint estimate_bler(const Link& link, const ChannelConfig& cfg, const StopRule& stop,
                        std::uint64_t seed, std::uint64_t point_id = 0,
                        unsigned threads = 1) {
  constexpr std::uint64_t kBatchBlocks = 1000;
  if (threads == 0) threads = 1;
  BlerPoint point;
  point.ebn0_db = cfg.ebn0_db;

  auto run_batch = [&](std::uint64_t batch_index, std::uint64_t blocks) {
    RngStream rng(seed, ((point_id + 1) << 32) + batch_index);
    return link(static_cast<std::size_t>(blocks), cfg, rng);
  };

  std::uint64_t next_batch = 0;
  bool done = false;
  while (!done) {
    std::vector<std::pair<std::uint64_t, std::future<std::uint64_t>>> wave;
    for (unsigned t = 0; t < threads; ++t) {
      const std::uint64_t start = next_batch * kBatchBlocks;
      if (start >= stop.max_blocks) break;
      const std::uint64_t blocks = std::min(kBatchBlocks, stop.max_blocks - start);
      wave.emplace_back(blocks, std::async(std::launch::async, run_batch, next_batch,
                                           blocks));
      ++next_batch;
    }
    if (wave.empty()) break;
    for (auto& [blocks, fut] : wave) {
      const std::uint64_t errs = fut.get();
      if (done) continue;  // batches past the stop point are discarded
      point.errors += errs;
      point.blocks += blocks;
      if (point.errors >= stop.min_errors || point.blocks >= stop.max_blocks) done = true;
    }
  }
  point.bler = point.blocks > 0
                   ? static_cast<double>(point.errors) / static_cast<double>(point.blocks)
                   : 0.0;
  return point;
}

template <class Link>
std::vector<BlerPoint> sweep(const Link& link, const SweepSpec& spec, ChannelKind kind,
                             double rate, std::size_t n, std::uint64_t seed,
                             unsigned threads = 1) {
  if (spec.grid.empty()) throw std::invalid_argument("sweep: empty Eb/N0 grid");
  for (std::size_t i = 1; i < spec.grid.size(); ++i)
    if (!(spec.grid[i] > spec.grid[i - 1]))
      throw std::invalid_argument("sweep: grid must be strictly increasing");
  std::vector<BlerPoint> points;
  for (std::size_t i = 0; i < spec.grid.size(); ++i) {
    const ChannelConfig cfg{kind, rate, spec.grid[i], n};
    points.push_back(estimate_bler(link, cfg, spec.stop, seed, i, threads));
  }
  return points;
}

// ---------------------------------------------------------------------------
// Links

struct FfLink {
  const FfAutoencoder* model;

  std::uint64_t operator()(std::size_t count, const ChannelConfig& cfg,
                           RngStream& rng) const {
    std::vector<Message> msgs(count);
    for (auto& m : msgs) m = static_cast<Message>(rng.next_below(model->code.q));
    return ff_count_block_errors(*model, msgs, cfg, rng);
  }
};

struct BpLink {
  const BpAutoencoder* model;

  std::uint64_t operator()(std::size_t count, const ChannelConfig& cfg,
                           RngStream& rng) const {
    std::vector<Message> msgs(count);
    for (auto& m : msgs) m = static_cast<Message>(rng.next_below(model->code.q));
    return bp_count_block_errors(*model, msgs, cfg, rng);
  }
};

// Uncoded BPSK over AWGN, bypassing all networks: k bits per block mapped to
// k antipodal symbols (rate 1), decided by sign.
struct UncodedBpskLink {
  unsigned k;

  std::uint64_t operator()(std::size_t count, const ChannelConfig& cfg,
                           RngStream& rng) const {
    const double sigma = std::sqrt(cfg.noise_variance());
    std::uint64_t errors = 0;
    for (std::size_t b = 0; b < count; ++b) {
      const std::uint64_t bits = rng.next_u64();
      bool block_error = false;
      for (unsigned i = 0; i < k; ++i) {
        const double x = (bits >> i) & 1 ? 1.0 : -1.0;
        const double y = x + sigma * rng.next_gaussian();
        if ((y >= 0.0) != ((bits >> i) & 1)) block_error = true;
      }
      if (block_error) ++errors;
    }
    return errors;
  }
};

inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Analytic block error rate of uncoded BPSK over AWGN:
// 1 - (1 - Q(sqrt(2 Eb/N0)))^k.
inline double uncoded_bpsk_reference(double ebn0_db, unsigned k) {
  if (k == 0) throw std::invalid_argument("uncoded_bpsk_reference: k must be positive");
  const double p_bit = q_function(std::sqrt(2.0 * std::pow(10.0, ebn0_db / 10.0)));
  return 1.0 - std::pow(1.0 - p_bit, static_cast<double>(k));
}

// ---------------------------------------------------------------------------
// Complexity models

// Wall-clock units to update an N-layer network once, assuming one time unit
// per layer pass: backprop needs the full forward plus the backward unlock
// (2N), forward-forward needs the forward plus one extra slot (N+1).
inline std::pair<std::size_t, std::size_t> pipeline_timing_model(std::size_t layer_count) {
  if (layer_count == 0)
    throw std::invalid_argument("pipeline_timing_model: need at least one layer");
  return {2 * layer_count, layer_count + 1};
}

// Gradient scalars that must be resident at once: backprop stores one per
// parameter, forward-forward only ever holds one layer's gradient.
inline std::size_t gradient_memory_report(const std::vector<DenseLayer>& layers,
                                          Algo algo) {
  if (algo == Algo::ff) {
    std::size_t mx = 0;
    for (const auto& l : layers) mx = std::max(mx, l.parameter_count());
    return mx;
  }
  std::size_t total = 0;
  for (const auto& l : layers) total += l.parameter_count();
  return total;
}

inline std::size_t gradient_memory_report(const FfAutoencoder& m, Algo algo) {
  std::vector<DenseLayer> all = m.encoder;
  all.insert(all.end(), m.decoder.begin(), m.decoder.end());
  all.push_back(m.classifier);
  return gradient_memory_report(all, algo);
}

inline std::size_t gradient_memory_report(const BpAutoencoder& m, Algo algo) {
  std::vector<DenseLayer> all = m.encoder;
  all.insert(all.end(), m.decoder.begin(), m.decoder.end());
  return gradient_memory_report(all, algo);
}

// ---------------------------------------------------------------------------
// Size sweep (one trained model per grid cell, evaluated at a fixed SNR)

struct SizeSweepRow {
  std::size_t enc_layers = 0, dec_layers = 0, width = 0;
  double bler = 0.0;
};

inline std::vector<SizeSweepRow> size_sweep(
    const TrainConfig& base, const std::vector<std::size_t>& enc_grid,
    const std::vector<std::size_t>& dec_grid, const std::vector<std::size_t>& width_grid,
    double eval_ebn0_db, const StopRule& stop, unsigned threads = 1,
    const LogHook& on_log = {}) {
  if (base.algo != Algo::ff) throw std::invalid_argument("size_sweep: base config must be ff");
  if (enc_grid.empty() || dec_grid.empty() || width_grid.empty())
    throw std::invalid_argument("size_sweep: empty grid");
  std::vector<SizeSweepRow> rows;
  std::uint64_t cell = 0;
  for (std::size_t w : width_grid) {
    for (std::size_t l : enc_grid) {
      for (std::size_t k : dec_grid) {
        TrainConfig cfg = base;
        cfg.enc_layers = l;
        cfg.dec_layers = k;
        cfg.width = w;
        FfTrainResult r = train_ff(cfg, {}, on_log);
        ChannelConfig chan = cfg.channel_config();
        chan.ebn0_db = eval_ebn0_db;
        const BlerPoint p =
            estimate_bler(FfLink{&r.model}, chan, stop, cfg.seed, 1000 + cell, threads);
        rows.push_back({l, k, w, p.bler});
        ++cell;
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV output. Floating values carry 17 significant digits so files
// round-trip bit-exactly.

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<BlerPoint>& points) {
  os << "EbN0_dB,bler,errors,blocks\n";
  for (const auto& p : points)
    os << format_g17(p.ebn0_db) << ',' << format_g17(p.bler) << ',' << p.errors << ','
       << p.blocks << '\n';
}

inline void write_convergence_csv(std::ostream& os, const TrainLog& log) {
  os << "iter,bler\n";
  for (const auto& e : log.entries)
    os << e.iter << ',' << format_g17(e.bler) << '\n';
}

inline void write_size_sweep_csv(std::ostream& os, const std::vector<SizeSweepRow>& rows) {
  os << "L,K,W,bler\n";
  for (const auto& r : rows)
    os << r.enc_layers << ',' << r.dec_layers << ',' << r.width << ','
       << format_g17(r.bler) << '\n';
}

}  // namespace ffae
