#include "gae/csv.hpp"
#include "gae/error.hpp"
#include "gae/run_config.hpp"

#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace gae;

namespace fs = std::filesystem;

namespace {

/// Run the CLI binary through the shell; returns its exit status.
int run_cli_command(const std::string& args) {
  const std::string cmd = std::string(GAE_CLI_PATH) + " " + args;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config keys parse their value types") {
  RunConfig cfg;
  apply_kv(cfg, "hidden", "16");
  CHECK(cfg.hidden == 16);
  apply_kv(cfg, "lr0", "2.5e-4");
  CHECK(cfg.train.lr0 == 2.5e-4);
  apply_kv(cfg, "deterministic", "true");
  CHECK(cfg.train.deterministic);
  apply_kv(cfg, "deterministic", "0");
  CHECK_FALSE(cfg.train.deterministic);
  apply_kv(cfg, "reduction_factors", "4, 4");
  CHECK(cfg.reduction_factors == std::vector<int>{4, 4});
  apply_kv(cfg, "encoder_lengthscales", "");
  CHECK(cfg.encoder_lengthscales.empty());
  apply_kv(cfg, "decoder_lengthscales", "0.1,0.2");
  CHECK(cfg.decoder_lengthscales == std::vector<double>{0.1, 0.2});
  apply_kv(cfg, "seed", "12345");
  CHECK(cfg.train.seed == 12345);
  apply_kv(cfg, "preset", " model2 ");
  CHECK(cfg.preset == "model2");

  CHECK_THROWS_WITH_AS(apply_kv(cfg, "frobnicate", "1"), "unknown config key 'frobnicate'",
                       ConfigError);
  CHECK_THROWS_AS(apply_kv(cfg, "hidden", "four"), ConfigError);
  CHECK_THROWS_AS(apply_kv(cfg, "lr0", "fast"), ConfigError);
  CHECK_THROWS_AS(apply_kv(cfg, "deterministic", "maybe"), ConfigError);
  CHECK_THROWS_AS(apply_kv(cfg, "seed", "-1"), ConfigError);
  CHECK_THROWS_AS(apply_kv(cfg, "reduction_factors", "4,x"), ConfigError);
}

TEST_CASE("config files allow comments and overrides win") {
  const fs::path dir = fresh_dir("gae_cfg_parse");
  const std::string path = (dir / "run.cfg").string();
  {
    std::ofstream out(path);
    out << "# a comment\n\n  hidden = 8 \nlr0 = 1e-2\nmax_epochs= 3\n";
  }

  RunConfig cfg = load_run_config(path, {"lr0=5e-3", "batch_size=2"});
  CHECK(cfg.hidden == 8);
  CHECK(cfg.train.lr0 == 5e-3);  // override beats the file
  CHECK(cfg.train.max_epochs == 3);
  CHECK(cfg.train.batch_size == 2);
  CHECK(cfg.val_fraction == 0.1);  // untouched default

  {
    std::ofstream out(path);
    out << "hidden 8\n";
  }
  CHECK_THROWS_AS(load_run_config(path, {}), ConfigError);
  CHECK_THROWS_AS(load_run_config((dir / "missing.cfg").string(), {}), ConfigError);
  CHECK_THROWS_AS(load_run_config("", {"hidden"}), ConfigError);

  RunConfig defaults = load_run_config("", {});
  CHECK(defaults.hidden == 32);
  CHECK(defaults.reduction_factors == std::vector<int>{16});
  fs::remove_all(dir);
}

TEST_CASE("presets resolve the lengthscale lists") {
  RunConfig cfg;
  cfg.preset = "model1";
  apply_preset(cfg);
  CHECK(cfg.encoder_lengthscales.empty());
  CHECK(cfg.decoder_lengthscales.empty());
  apply_preset(cfg);  // idempotent
  CHECK(cfg.decoder_lengthscales.empty());

  cfg = RunConfig{};
  cfg.preset = "model2";
  cfg.decoder_lengthscales.clear();  // cleared but required: falls back
  apply_preset(cfg);
  CHECK(cfg.encoder_lengthscales.empty());
  CHECK(cfg.decoder_lengthscales == std::vector<double>{0.16, 0.32, 0.64});

  cfg = RunConfig{};
  cfg.preset = "model2";
  cfg.decoder_lengthscales = {0.4};
  apply_preset(cfg);
  CHECK(cfg.decoder_lengthscales == std::vector<double>{0.4});  // explicit list kept

  cfg = RunConfig{};
  cfg.preset = "model3";
  cfg.encoder_lengthscales.clear();
  apply_preset(cfg);
  CHECK(cfg.encoder_lengthscales == std::vector<double>{0.16, 0.32, 0.64});
  CHECK(cfg.decoder_lengthscales == std::vector<double>{0.16, 0.32, 0.64});

  cfg = RunConfig{};
  cfg.preset = "model9";
  CHECK_THROWS_AS(apply_preset(cfg), ConfigError);

  cfg = RunConfig{};
  apply_preset(cfg);  // empty preset: untouched
  CHECK(cfg.encoder_lengthscales == std::vector<double>{0.16, 0.32, 0.64});
}

TEST_CASE("config lock round trips exactly") {
  const fs::path dir = fresh_dir("gae_cfg_lock");
  RunConfig cfg;
  cfg.hidden = 12;
  cfg.reduction_factors = {4, 4};
  cfg.encoder_lengthscales = {};
  cfg.decoder_lengthscales = {0.13, 0.29};
  cfg.radius = 0.123;
  cfg.append_edge_norm = true;
  cfg.val_fraction = 0.25;
  cfg.preset = "model2";
  cfg.train.lr0 = 7e-4;
  cfg.train.seed = 99;
  cfg.train.deterministic = true;
  cfg.train.max_epochs = 17;

  const std::string lock1 = (dir / "config.lock").string();
  write_config_lock(lock1, cfg);
  RunConfig back = load_run_config(lock1, {});
  const std::string lock2 = (dir / "config2.lock").string();
  write_config_lock(lock2, back);
  CHECK(slurp(lock1) == slurp(lock2));
  CHECK(back.hidden == 12);
  CHECK(back.decoder_lengthscales == std::vector<double>{0.13, 0.29});
  CHECK(back.encoder_lengthscales.empty());
  CHECK(back.train.deterministic);
  CHECK(back.preset == "model2");
  fs::remove_all(dir);
}

TEST_CASE("run config maps onto the model and graph options") {
  RunConfig cfg;
  cfg.hidden = 6;
  cfg.reduction_factors = {4, 2};
  cfg.encoder_lengthscales = {};
  cfg.decoder_lengthscales = {0.3};
  cfg.mp_per_fine_block = 3;
  cfg.mp_per_coarse_block = 2;
  cfg.augment_pooled_adjacency = true;
  cfg.radius = 0.07;
  cfg.append_edge_norm = true;

  ModelConfig mc = make_model_config(cfg, 2, 3);
  CHECK(mc.input_features == 2);
  CHECK(mc.edge_features == 3);
  CHECK(mc.hidden == 6);
  CHECK(mc.plan.rf == std::vector<int>{4, 2});
  CHECK(mc.encoder_mmp.lengthscales.empty());
  CHECK(mc.decoder_mmp.lengthscales == std::vector<double>{0.3});
  CHECK(mc.encoder_mmp.mp_per_fine_block == 3);
  CHECK(mc.decoder_mmp.mp_per_coarse_block == 2);
  CHECK(mc.augment_pooled_adjacency);

  GraphBuildOptions opts = make_graph_options(cfg);
  CHECK(opts.radius == 0.07);
  CHECK(opts.append_norm);
}

TEST_CASE("cli usage errors exit with status 2") {
  CHECK(run_cli_command("--help >/dev/null 2>&1") == 0);
  CHECK(run_cli_command(">/dev/null 2>&1") == 2);               // subcommand required
  CHECK(run_cli_command("frob >/dev/null 2>&1") == 2);          // unknown subcommand
  CHECK(run_cli_command("gen >/dev/null 2>&1") == 2);           // --out missing
  CHECK(run_cli_command("gen --out /tmp/x --wat 1 >/dev/null 2>&1") == 2);
  CHECK(run_cli_command("train --data /tmp/x >/dev/null 2>&1") == 2);  // --run-dir missing
}

TEST_CASE("cli gen writes a deterministic dataset") {
  const fs::path base = fresh_dir("gae_cli_gen");
  const std::string a = (base / "a").string();
  const std::string b = (base / "b").string();
  const std::string c = (base / "c").string();

  REQUIRE(run_cli_command("gen --out " + a + " --nc 40 --snapshots 2 --seed 5 >/dev/null 2>&1") == 0);
  REQUIRE(run_cli_command("gen --out " + b + " --nc 40 --snapshots 2 --seed 5 >/dev/null 2>&1") == 0);
  REQUIRE(run_cli_command("gen --out " + c + " --nc 40 --snapshots 2 --seed 6 >/dev/null 2>&1") == 0);

  CHECK(slurp(a + "/points.csv") == slurp(b + "/points.csv"));
  CHECK(slurp(a + "/snap_0001.csv") == slurp(b + "/snap_0001.csv"));
  CHECK(slurp(a + "/points.csv") != slurp(c + "/points.csv"));

  const Mat pts = read_csv(a + "/points.csv", {"x", "y"});
  CHECK(pts.rows() == 40);
  CHECK(fs::exists(a + "/faces.csv"));
  CHECK(fs::exists(a + "/meta.csv"));

  // nc below the generator's floor is a config error
  CHECK(run_cli_command("gen --out " + (base / "d").string() + " --nc 4 >/dev/null 2>&1") == 2);
  fs::remove_all(base);
}

TEST_CASE("cli train, eval, and reconstruct round trip") {
  const fs::path base = fresh_dir("gae_cli_flow");
  const std::string data = (base / "data").string();
  const std::string run = (base / "run").string();
  REQUIRE(run_cli_command("gen --out " + data + " --nc 40 --snapshots 4 --re 500 --seed 3 >/dev/null 2>&1") == 0);

  const std::string overrides =
      " --set hidden=4 --set reduction_factors=4 --set max_epochs=2 --set batch_size=2"
      " --set radius=0.25 --set val_fraction=0.25 --set encoder_lengthscales="
      " --set decoder_lengthscales=";
  REQUIRE(run_cli_command("train --data " + data + " --run-dir " + run + overrides +
                          " --seed 3 --deterministic >/dev/null 2>&1") == 0);

  CHECK(fs::exists(run + "/config.lock"));
  CHECK(fs::exists(run + "/stats.csv"));
  CHECK(fs::exists(run + "/metrics.csv"));
  CHECK(fs::exists(run + "/best.ckpt"));
  CHECK(fs::exists(run + "/last.ckpt"));

  // the lock carries the seed and the flag back into later commands
  RunConfig locked = load_run_config(run + "/config.lock", {});
  CHECK(locked.train.seed == 3);
  CHECK(locked.train.deterministic);
  CHECK(locked.hidden == 4);

  const Mat metrics = read_csv(run + "/metrics.csv",
                               {"epoch", "train_mse", "val_mse", "lr", "seconds"});
  CHECK(metrics.rows() == 2);

  const std::string rmse_path = (base / "rmse.csv").string();
  REQUIRE(run_cli_command("eval --run-dir " + run + " --data " + data + " --out " + rmse_path +
                          " >/dev/null 2>&1") == 0);
  const Mat rmse = read_csv(rmse_path, {"re", "feature", "rmse"});
  REQUIRE(rmse.rows() == 2);  // one trajectory, two features
  CHECK(rmse(0, 0) == 500.);
  CHECK(rmse(0, 1) == 0.);
  CHECK(rmse(1, 1) == 1.);
  CHECK(rmse(0, 2) > 0.);
  CHECK(rmse.allFinite());

  const std::string rec = (base / "rec").string();
  REQUIRE(run_cli_command("reconstruct --run-dir " + run + " --data " + data +
                          " --snapshot 1 --out " + rec + " >/dev/null 2>&1") == 0);
  const Mat recon = read_csv(rec + "/recon_1.csv", {"x", "y", "f0", "f1"});
  CHECK(recon.rows() == 40);
  CHECK(recon.allFinite());
  const Mat mask = read_csv(rec + "/mask_1.csv", {"x", "y", "level"});
  REQUIRE(mask.rows() == 40);
  int survivors = 0;
  for (Index i = 0; i < 40; ++i) {
    CHECK(mask(i, 2) >= 0.);
    CHECK(mask(i, 2) <= 1.);
    if (mask(i, 2) == 1.) ++survivors;
  }
  CHECK(survivors == 10);  // floor(40 / 4)

  // out-of-range snapshot is a runtime failure, not a usage error
  CHECK(run_cli_command("reconstruct --run-dir " + run + " --data " + data +
                        " --snapshot 99 --out " + rec + " >/dev/null 2>&1") == 1);
  fs::remove_all(base);
}

TEST_CASE("cli rejects unknown config keys by name") {
  const fs::path base = fresh_dir("gae_cli_badkey");
  const std::string err = (base / "err.txt").string();
  CHECK(run_cli_command("train --data /tmp/nowhere --run-dir " + (base / "r").string() +
                        " --set frobnicate=1 >/dev/null 2>" + err) == 2);
  const std::string msg = slurp(err);
  CHECK(msg.find("frobnicate") != std::string::npos);
  fs::remove_all(base);
}

TEST_CASE("cli deterministic training is reproducible byte for byte") {
  const fs::path base = fresh_dir("gae_cli_repro");
  const std::string data = (base / "data").string();
  REQUIRE(run_cli_command("gen --out " + data + " --nc 40 --snapshots 4 --seed 1 >/dev/null 2>&1") == 0);

  const std::string overrides =
      " --set hidden=4 --set reduction_factors=4 --set max_epochs=2 --set batch_size=2"
      " --set radius=0.25 --set val_fraction=0.25 --set encoder_lengthscales="
      " --set decoder_lengthscales= --seed 7 --deterministic";
  const std::string r1 = (base / "r1").string();
  const std::string r2 = (base / "r2").string();
  REQUIRE(run_cli_command("train --data " + data + " --run-dir " + r1 + overrides + " >/dev/null 2>&1") == 0);
  REQUIRE(run_cli_command("train --data " + data + " --run-dir " + r2 + overrides + " >/dev/null 2>&1") == 0);

  CHECK(slurp(r1 + "/metrics.csv") == slurp(r2 + "/metrics.csv"));
  CHECK(slurp(r1 + "/best.ckpt") == slurp(r2 + "/best.ckpt"));
  CHECK(slurp(r1 + "/config.lock") == slurp(r2 + "/config.lock"));
  fs::remove_all(base);
}
