#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ffae/cli.hpp"

using namespace ffae;
using ffae::cli::Driver;

namespace {

void parse(Driver& d, std::vector<std::string> args) {
  args.insert(args.begin(), "ffae");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  d.app.parse(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("empty config resolves to the ff defaults") {
  Driver d;
  parse(d, {"train", "--algo", "ff"});
  const TrainConfig c = cli::resolve_train_config(d.opt);
  REQUIRE(c.algo == Algo::ff);
  REQUIRE(c.enc_layers == 4);
  REQUIRE(c.dec_layers == 4);
  REQUIRE(c.width == 80);
  REQUIRE(c.lr_ff == 0.001);
  REQUIRE(c.lr_cls == 0.005);
  REQUIRE(c.wd_ff == 0.0003);
  REQUIRE(c.wd_cls == 0.003);
  REQUIRE(c.mom_ff == 0.9);
  REQUIRE(c.mom_cls == 0.9);
  REQUIRE(c.max_iters == 8200);
  REQUIRE(c.batch == 250);
  REQUIRE(c.train_ebn0_db == 5.0);
  REQUIRE(c.k == 4);
  REQUIRE(c.n == 7);
  REQUIRE(c.channel == ChannelKind::awgn);
  REQUIRE(c.stage == OutputStage::normalize);
}

TEST_CASE("empty config resolves to the bp defaults") {
  Driver d;
  parse(d, {"train", "--algo", "bp"});
  const TrainConfig c = cli::resolve_train_config(d.opt);
  REQUIRE(c.enc_layers == 2);
  REQUIRE(c.dec_layers == 2);
  REQUIRE(c.width == 16);
  REQUIRE(c.lr_adam == 0.001);
  REQUIRE(c.max_iters == 5000);
  REQUIRE(c.eval_stride == 10);
}

TEST_CASE("bp-rl defaults") {
  Driver d;
  parse(d, {"train", "--algo", "bp-rl"});
  const TrainConfig c = cli::resolve_train_config(d.opt);
  const RlConfig rl = cli::resolve_rl_config(d.opt);
  REQUIRE(c.max_iters == 18000);
  REQUIRE(c.eval_stride == 1);
  REQUIRE(rl.sigma_rl == 0.1);
  REQUIRE(rl.rounds == 10);
}

TEST_CASE("flags override config-file values which override defaults") {
  namespace fs = std::filesystem;
  const fs::path cfg_path = fs::temp_directory_path() / "ffae_cli_test.ini";
  {
    std::ofstream f(cfg_path);
    f << "[train]\n";
    f << "width=32\n";
    f << "iters=123\n";
  }
  SECTION("file value wins over the default") {
    Driver d;
    parse(d, {"train", "--algo", "ff", "--config", cfg_path.string()});
    const TrainConfig c = cli::resolve_train_config(d.opt);
    REQUIRE(c.width == 32);
    REQUIRE(c.max_iters == 123);
    REQUIRE(c.enc_layers == 4);  // untouched default
  }
  SECTION("flag wins over the file value") {
    Driver d;
    parse(d, {"train", "--algo", "ff", "--config", cfg_path.string(), "--width", "64"});
    const TrainConfig c = cli::resolve_train_config(d.opt);
    REQUIRE(c.width == 64);
    REQUIRE(c.max_iters == 123);
  }
}

TEST_CASE("unknown config keys are rejected by name") {
  namespace fs = std::filesystem;
  const fs::path cfg_path = fs::temp_directory_path() / "ffae_cli_badkey.ini";
  {
    std::ofstream f(cfg_path);
    f << "[train]\n";
    f << "learning_rat=5\n";
  }
  Driver d;
  try {
    parse(d, {"train", "--config", cfg_path.string()});
    FAIL("expected a config error");
  } catch (const CLI::ParseError& e) {
    REQUIRE(std::string(e.what()).find("learning_rat") != std::string::npos);
  }
}

TEST_CASE("invalid option values fail with a descriptive error") {
  Driver d;
  REQUIRE_THROWS_AS(parse(d, {"train", "--algo", "genetic"}), CLI::ParseError);
  Driver d2;
  parse(d2, {"train", "--algo", "ff", "--k", "0"});
  REQUIRE_THROWS_AS(cli::resolve_train_config(d2.opt), std::invalid_argument);
  Driver d3;
  parse(d3, {"train", "--algo", "bp-rl", "--sigma-rl", "0"});
  REQUIRE_THROWS_AS(cli::resolve_rl_config(d3.opt), std::invalid_argument);
}

TEST_CASE("a subcommand is required") {
  Driver d;
  REQUIRE_THROWS_AS(parse(d, {}), CLI::ParseError);
}
