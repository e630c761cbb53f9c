#pragma once

// Command-line front end: flag/config-file parsing with per-algorithm
// defaults, experiment orchestration, and reproducibility metadata. Flags
// override config-file values, which override the built-in defaults; every
// run echoes its fully resolved configuration into the output directory.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "ffae/checkpoint.hpp"
#include "ffae/eval.hpp"
#include "ffae/gradcheck.hpp"
#include "ffae/training.hpp"
#include "ffae/version.hpp"

namespace ffae::cli {

struct CliOptions {
  // training (unset values resolve to the per-algorithm defaults)
  std::string algo = "ff";
  std::optional<std::string> channel, stage;
  std::optional<double> train_ebn0, lr_ff, lr_cls, wd_ff, wd_cls, mom_ff, mom_cls,
      lr_adam, sigma_rl;
  std::optional<unsigned> k;
  std::optional<std::size_t> n, enc_layers, dec_layers, width, iters, batch,
      eval_stride, eval_size, checkpoint_every, rl_rounds;
  std::optional<std::uint64_t> seed;
  // shared
  std::string out_dir = "ffae_out";
  unsigned threads = 0;
  // evaluate / sweep
  std::string checkpoint;
  double ebn0 = 5.0;
  std::uint64_t min_errors = 100;
  std::uint64_t max_blocks = 1000000;
  double grid_min = -4.0, grid_max = 20.0, grid_step = 1.0;
  // size sweep
  std::vector<std::size_t> grid_enc{2, 3, 4}, grid_dec{2, 3, 4}, grid_width{16, 80};
  double size_eval_ebn0 = 7.0;
};

inline Algo parse_algo(const std::string& s) {
  if (s == "ff") return Algo::ff;
  if (s == "bp") return Algo::bp;
  if (s == "bp-rl") return Algo::bp_rl;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

inline ChannelKind parse_channel(const std::string& s) {
  if (s == "awgn") return ChannelKind::awgn;
  if (s == "rbf") return ChannelKind::rbf;
  throw std::invalid_argument("unknown channel '" + s + "'");
}

inline OutputStage parse_stage(const std::string& s) {
  if (s == "normalize") return OutputStage::normalize;
  if (s == "quantize") return OutputStage::quantize;
  throw std::invalid_argument("unknown output stage '" + s + "'");
}

inline TrainConfig resolve_train_config(const CliOptions& o) {
  TrainConfig c = TrainConfig::defaults(parse_algo(o.algo));
  if (o.channel) c.channel = parse_channel(*o.channel);
  if (o.stage) c.stage = parse_stage(*o.stage);
  if (o.train_ebn0) c.train_ebn0_db = *o.train_ebn0;
  if (o.k) c.k = *o.k;
  if (o.n) c.n = *o.n;
  if (o.enc_layers) c.enc_layers = *o.enc_layers;
  if (o.dec_layers) c.dec_layers = *o.dec_layers;
  if (o.width) c.width = *o.width;
  if (o.iters) c.max_iters = *o.iters;
  if (o.batch) c.batch = *o.batch;
  if (o.lr_ff) c.lr_ff = *o.lr_ff;
  if (o.lr_cls) c.lr_cls = *o.lr_cls;
  if (o.wd_ff) c.wd_ff = *o.wd_ff;
  if (o.wd_cls) c.wd_cls = *o.wd_cls;
  if (o.mom_ff) c.mom_ff = *o.mom_ff;
  if (o.mom_cls) c.mom_cls = *o.mom_cls;
  if (o.lr_adam) c.lr_adam = *o.lr_adam;
  if (o.seed) c.seed = *o.seed;
  if (o.eval_stride) c.eval_stride = *o.eval_stride;
  if (o.eval_size) c.eval_size = *o.eval_size;
  if (o.checkpoint_every) c.checkpoint_every = *o.checkpoint_every;
  if (c.batch == 0) throw std::invalid_argument("batch size must be positive");
  if (c.eval_size == 0) throw std::invalid_argument("eval size must be positive");
  c.code();  // validates k and n
  return c;
}

inline RlConfig resolve_rl_config(const CliOptions& o) {
  RlConfig rl;
  if (o.sigma_rl) rl.sigma_rl = *o.sigma_rl;
  if (o.rl_rounds) rl.rounds = *o.rl_rounds;
  if (!(rl.sigma_rl > 0.0)) throw std::invalid_argument("sigma-rl must be positive");
  if (rl.rounds == 0) throw std::invalid_argument("rl-rounds must be positive");
  return rl;
}

inline StopRule resolve_stop_rule(const CliOptions& o) {
  if (o.min_errors == 0 || o.max_blocks == 0)
    throw std::invalid_argument("min-errors and max-blocks must be positive");
  return {o.min_errors, o.max_blocks};
}

inline unsigned resolve_threads(const CliOptions& o) {
  if (o.threads > 0) return o.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : std::min(hw, 8u);
}

inline const char* algo_name(Algo a) {
  switch (a) {
    case Algo::ff: return "ff";
    case Algo::bp: return "bp";
    case Algo::bp_rl: return "bp-rl";
  }
  return "?";
}

inline void write_resolved_config(std::ostream& os, const TrainConfig& c,
                                  const RlConfig& rl) {
  os << "[train]\n";
  os << "algo=" << algo_name(c.algo) << '\n';
  os << "channel=" << (c.channel == ChannelKind::awgn ? "awgn" : "rbf") << '\n';
  os << "stage=" << (c.stage == OutputStage::normalize ? "normalize" : "quantize")
     << '\n';
  os << "train-ebn0=" << format_g17(c.train_ebn0_db) << '\n';
  os << "k=" << c.k << '\n';
  os << "n=" << c.n << '\n';
  os << "enc-layers=" << c.enc_layers << '\n';
  os << "dec-layers=" << c.dec_layers << '\n';
  os << "width=" << c.width << '\n';
  os << "iters=" << c.max_iters << '\n';
  os << "batch=" << c.batch << '\n';
  os << "lr-ff=" << format_g17(c.lr_ff) << '\n';
  os << "lr-cls=" << format_g17(c.lr_cls) << '\n';
  os << "wd-ff=" << format_g17(c.wd_ff) << '\n';
  os << "wd-cls=" << format_g17(c.wd_cls) << '\n';
  os << "momentum-ff=" << format_g17(c.mom_ff) << '\n';
  os << "momentum-cls=" << format_g17(c.mom_cls) << '\n';
  os << "lr=" << format_g17(c.lr_adam) << '\n';
  os << "seed=" << c.seed << '\n';
  os << "eval-stride=" << c.eval_stride << '\n';
  os << "eval-size=" << c.eval_size << '\n';
  os << "checkpoint-every=" << c.checkpoint_every << '\n';
  os << "sigma-rl=" << format_g17(rl.sigma_rl) << '\n';
  os << "rl-rounds=" << rl.rounds << '\n';
}

class Driver {
 public:
  CLI::App app{"Forward-forward autoencoder channel-coding toolkit"};
  CliOptions opt;

  Driver() {
    app.require_subcommand(1);
    app.fallthrough();  // app-level options like --config may follow the subcommand
    app.set_config("--config", "", "Read options from an INI-style file");
    app.allow_config_extras(CLI::config_extras_mode::error);  // unknown keys fail by name

    train_cmd_ = app.add_subcommand("train", "Train a model and write a checkpoint");
    add_train_options(train_cmd_);
    add_common_options(train_cmd_);

    eval_cmd_ =
        app.add_subcommand("evaluate", "Estimate the BLER of a checkpoint at one SNR");
    eval_cmd_->add_option("--checkpoint", opt.checkpoint, "Model checkpoint")->required();
    eval_cmd_->add_option("--ebn0", opt.ebn0, "Eb/N0 in dB");
    eval_cmd_->add_option("--channel", opt.channel, "Channel: awgn or rbf");
    add_stop_options(eval_cmd_);
    add_common_options(eval_cmd_);

    sweep_cmd_ = app.add_subcommand("sweep", "BLER waterfall over an Eb/N0 grid");
    sweep_cmd_->add_option("--checkpoint", opt.checkpoint, "Model checkpoint")->required();
    sweep_cmd_->add_option("--channel", opt.channel, "Channel: awgn or rbf");
    sweep_cmd_->add_option("--grid-min", opt.grid_min, "First Eb/N0 point (dB)");
    sweep_cmd_->add_option("--grid-max", opt.grid_max, "Last Eb/N0 point (dB)");
    sweep_cmd_->add_option("--grid-step", opt.grid_step, "Grid step (dB)");
    add_stop_options(sweep_cmd_);
    add_common_options(sweep_cmd_);

    size_cmd_ = app.add_subcommand(
        "size-sweep", "Train one model per (L, K, W) cell and tabulate the BLER");
    add_train_options(size_cmd_);
    size_cmd_->add_option("--grid-L", opt.grid_enc, "Encoder layer counts")
        ->delimiter(',');
    size_cmd_->add_option("--grid-K", opt.grid_dec, "Decoder layer counts")
        ->delimiter(',');
    size_cmd_->add_option("--grid-W", opt.grid_width, "Layer widths")->delimiter(',');
    size_cmd_->add_option("--eval-ebn0", opt.size_eval_ebn0, "Evaluation Eb/N0 (dB)");
    add_stop_options(size_cmd_);
    add_common_options(size_cmd_);

    gradcheck_cmd_ = app.add_subcommand(
        "gradcheck", "Verify every gradient path against central differences");
    add_common_options(gradcheck_cmd_);
  }

  int execute() {
    if (train_cmd_->parsed()) return run_train();
    if (eval_cmd_->parsed()) return run_evaluate();
    if (sweep_cmd_->parsed()) return run_sweep();
    if (size_cmd_->parsed()) return run_size_sweep();
    if (gradcheck_cmd_->parsed()) return run_gradcheck_cmd();
    std::cerr << "no subcommand given\n";
    return 1;
  }

 private:
  CLI::App* train_cmd_ = nullptr;
  CLI::App* eval_cmd_ = nullptr;
  CLI::App* sweep_cmd_ = nullptr;
  CLI::App* size_cmd_ = nullptr;
  CLI::App* gradcheck_cmd_ = nullptr;

  void add_train_options(CLI::App* cmd) {
    cmd->add_option("--algo", opt.algo, "Training algorithm")
        ->check(CLI::IsMember({"ff", "bp", "bp-rl"}));
    cmd->add_option("--channel", opt.channel, "Channel: awgn or rbf")
        ->check(CLI::IsMember({"awgn", "rbf"}));
    cmd->add_option("--stage", opt.stage, "Encoder output stage")
        ->check(CLI::IsMember({"normalize", "quantize"}));
    cmd->add_option("--train-ebn0", opt.train_ebn0, "Training Eb/N0 (dB)");
    cmd->add_option("--k", opt.k, "Bits per message");
    cmd->add_option("--n", opt.n, "Blocklength");
    cmd->add_option("--enc-layers,-L", opt.enc_layers, "Encoder layer count");
    cmd->add_option("--dec-layers,-K", opt.dec_layers, "Decoder layer count");
    cmd->add_option("--width,-W", opt.width, "Hidden layer width");
    cmd->add_option("--iters", opt.iters, "Training iterations");
    cmd->add_option("--batch", opt.batch, "Batch size");
    cmd->add_option("--lr-ff", opt.lr_ff, "Layer-local SGD learning rate");
    cmd->add_option("--lr-cls", opt.lr_cls, "Classifier SGD learning rate");
    cmd->add_option("--wd-ff", opt.wd_ff, "Layer-local SGD weight decay");
    cmd->add_option("--wd-cls", opt.wd_cls, "Classifier SGD weight decay");
    cmd->add_option("--momentum-ff", opt.mom_ff, "Layer-local SGD momentum");
    cmd->add_option("--momentum-cls", opt.mom_cls, "Classifier SGD momentum");
    cmd->add_option("--lr", opt.lr_adam, "Adam learning rate (bp / bp-rl)");
    cmd->add_option("--sigma-rl", opt.sigma_rl, "Exploration std (bp-rl)");
    cmd->add_option("--rl-rounds", opt.rl_rounds, "Batches per bp-rl phase");
    cmd->add_option("--eval-stride", opt.eval_stride, "Iterations between BLER logs");
    cmd->add_option("--eval-size", opt.eval_size, "Blocks per convergence BLER estimate");
    cmd->add_option("--checkpoint-every", opt.checkpoint_every,
                    "Write intermediate checkpoints every N iterations");
  }

  void add_stop_options(CLI::App* cmd) {
    cmd->add_option("--min-errors", opt.min_errors, "Stop a point after this many errors");
    cmd->add_option("--max-blocks", opt.max_blocks, "Block budget per point");
  }

  void add_common_options(CLI::App* cmd) {
    cmd->add_option("--seed", opt.seed, "Run seed");
    cmd->add_option("--out", opt.out_dir, "Output directory")->envname("FFAE_OUT_DIR");
    cmd->add_option("--threads", opt.threads, "Evaluation worker threads (0 = auto)");
  }

  std::filesystem::path prepare_out_dir(const std::string& subcommand,
                                        const TrainConfig& cfg, const RlConfig& rl) {
    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    {
      std::ofstream cf(dir / "config.txt", std::ios::binary | std::ios::trunc);
      write_resolved_config(cf, cfg, rl);
    }
    {
      std::ofstream ri(dir / "run_info.txt", std::ios::binary | std::ios::trunc);
      ri << "subcommand=" << subcommand << '\n';
      ri << "seed=" << cfg.seed << '\n';
      ri << "build=" << build_id() << '\n';
      ri << "checkpoint_format_version=" << kCheckpointFormatVersion << '\n';
      ri << "csv_format_version=" << kCsvFormatVersion << '\n';
    }
    return dir;
  }

  static void print_log_entry(const TrainLogEntry& e) {
    std::printf("iter=%zu bler=%.6g cce=%.6g\n", e.iter, e.bler, e.cce);
    std::fflush(stdout);
  }

  int run_train() {
    const TrainConfig cfg = resolve_train_config(opt);
    const RlConfig rl = resolve_rl_config(opt);
    const auto dir = prepare_out_dir("train", cfg, rl);
    const std::string ckpt_path = (dir / "checkpoint.ffae").string();
    auto snapshot_path = [&](std::size_t iter) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "checkpoint_iter%06zu.ffae", iter);
      return (dir / buf).string();
    };
    TrainLog log;
    if (cfg.algo == Algo::ff) {
      FfTrainResult r = train_ff(
          cfg,
          [&](std::size_t iter, const FfAutoencoder& m) {
            save_checkpoint(snapshot_path(iter), m);
          },
          print_log_entry);
      save_checkpoint(ckpt_path, r.model);
      log = std::move(r.log);
    } else {
      auto snapshot = [&](std::size_t iter, const BpAutoencoder& m) {
        save_checkpoint(snapshot_path(iter), m);
      };
      BpTrainResult r = cfg.algo == Algo::bp
                            ? train_bp(cfg, snapshot, print_log_entry)
                            : train_bp_rl(cfg, rl, snapshot, print_log_entry);
      save_checkpoint(ckpt_path, r.model);
      log = std::move(r.log);
    }
    {
      std::ofstream cs(dir / "convergence.csv", std::ios::binary | std::ios::trunc);
      write_convergence_csv(cs, log);
    }
    std::printf("wrote %s and %s\n", ckpt_path.c_str(),
                (dir / "convergence.csv").string().c_str());
    return 0;
  }

  struct LoadedLink {
    AnyModel model;
    CodeParams code;
    bool quantized = false;

    std::uint64_t operator()(std::size_t count, const ChannelConfig& cfg,
                             RngStream& rng) const {
      if (const auto* ff = std::get_if<FfAutoencoder>(&model))
        return FfLink{ff}(count, cfg, rng);
      return BpLink{&std::get<BpAutoencoder>(model)}(count, cfg, rng);
    }
  };

  LoadedLink load_link() {
    LoadedLink l{load_checkpoint(opt.checkpoint), {}, false};
    if (const auto* ff = std::get_if<FfAutoencoder>(&l.model)) {
      l.code = ff->code;
      l.quantized = ff->stage == OutputStage::quantize;
    } else {
      const auto& bp = std::get<BpAutoencoder>(l.model);
      l.code = bp.code;
      l.quantized = bp.quantize;
    }
    return l;
  }

  TrainConfig metadata_config() {
    // Channel/eval metadata for non-training subcommands, echoed for
    // reproducibility.
    TrainConfig cfg = TrainConfig::defaults(parse_algo(opt.algo));
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.channel) cfg.channel = parse_channel(*opt.channel);
    return cfg;
  }

  int run_evaluate() {
    const LoadedLink link = load_link();
    const StopRule stop = resolve_stop_rule(opt);
    const TrainConfig meta = metadata_config();
    const auto dir = prepare_out_dir("evaluate", meta, RlConfig{});
    const ChannelConfig cfg{meta.channel, link.code.rate(), opt.ebn0, link.code.n};
    const BlerPoint p =
        estimate_bler(link, cfg, stop, meta.seed, 0, resolve_threads(opt));
    const auto csv = dir / "evaluate.csv";
    const bool fresh = !std::filesystem::exists(csv);
    std::ofstream os(csv, std::ios::binary | std::ios::app);
    if (fresh) os << "EbN0_dB,bler,errors,blocks\n";
    os << format_g17(p.ebn0_db) << ',' << format_g17(p.bler) << ',' << p.errors << ','
       << p.blocks << '\n';
    std::printf("EbN0_dB=%s bler=%s errors=%llu blocks=%llu\n",
                format_g17(p.ebn0_db).c_str(), format_g17(p.bler).c_str(),
                static_cast<unsigned long long>(p.errors),
                static_cast<unsigned long long>(p.blocks));
    return 0;
  }

  int run_sweep() {
    const LoadedLink link = load_link();
    const StopRule stop = resolve_stop_rule(opt);
    const TrainConfig meta = metadata_config();
    const auto dir = prepare_out_dir("sweep", meta, RlConfig{});
    SweepSpec spec;
    spec.stop = stop;
    if (!(opt.grid_step > 0.0)) throw std::invalid_argument("grid-step must be positive");
    for (double v = opt.grid_min; v <= opt.grid_max + 1e-9; v += opt.grid_step)
      spec.grid.push_back(v);
    const auto points = sweep(link, spec, meta.channel, link.code.rate(), link.code.n,
                              meta.seed, resolve_threads(opt));
    std::ofstream os(dir / "sweep.csv", std::ios::binary | std::ios::trunc);
    write_sweep_csv(os, points);
    for (const auto& p : points)
      std::printf("EbN0_dB=%g bler=%g errors=%llu blocks=%llu\n", p.ebn0_db, p.bler,
                  static_cast<unsigned long long>(p.errors),
                  static_cast<unsigned long long>(p.blocks));
    return 0;
  }

  int run_size_sweep() {
    opt.algo = "ff";
    const TrainConfig base = resolve_train_config(opt);
    const RlConfig rl = resolve_rl_config(opt);
    const StopRule stop = resolve_stop_rule(opt);
    const auto dir = prepare_out_dir("size-sweep", base, rl);
    const auto rows = size_sweep(base, opt.grid_enc, opt.grid_dec, opt.grid_width,
                                 opt.size_eval_ebn0, stop, resolve_threads(opt));
    std::ofstream os(dir / "size_sweep.csv", std::ios::binary | std::ios::trunc);
    write_size_sweep_csv(os, rows);
    for (const auto& r : rows)
      std::printf("L=%zu K=%zu W=%zu bler=%g\n", r.enc_layers, r.dec_layers, r.width,
                  r.bler);
    return 0;
  }

  int run_gradcheck_cmd() {
    const TrainConfig meta = metadata_config();
    const auto dir = prepare_out_dir("gradcheck", meta, RlConfig{});
    const auto results = run_gradcheck(meta.seed);
    bool all_pass = true;
    std::ofstream report(dir / "gradcheck.txt", std::ios::binary | std::ios::trunc);
    for (const auto& r : results) {
      all_pass = all_pass && r.pass();
      const std::string line = std::string(r.pass() ? "PASS" : "FAIL") + " " + r.path +
                               " instances=" + std::to_string(r.instances) +
                               " max_rel_err=" + format_g17(r.max_rel_err);
      std::printf("%s\n", line.c_str());
      report << line << '\n';
    }
    return all_pass ? 0 : 1;
  }
};

inline int main_entry(int argc, char** argv) {
  Driver driver;
  try {
    driver.app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return driver.app.exit(e);
  }
  try {
    return driver.execute();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace ffae::cli
