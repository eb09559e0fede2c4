#include "gae/csv.hpp"
#include "gae/data.hpp"
#include "gae/error.hpp"
#include "gae/graph.hpp"
#include "gae/model.hpp"
#include "gae/train.hpp"

#include "doctest.h"
#include "helpers.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace gae;
using test_util::max_abs_diff;
using test_util::random_mat;

namespace fs = std::filesystem;

namespace {

struct Problem {
  Graph g0;
  SnapshotSet train, val;
  Standardizer stdzr;
};

/// Small standardized training problem on a synthetic mesh.
Problem make_problem(Index nc = 60, int m = 6) {
  MeshParams mesh;
  mesh.nc = nc;
  FlowParams flow;
  flow.re = 500.;
  auto [mi, set] = generate_synthetic(mesh, flow, m, 11);

  Problem p;
  GraphBuildOptions opts;
  opts.radius = 0.25;
  p.g0 = build_input_graph(mi, opts);
  auto [z, stdzr] = standardize(set, std::nullopt);
  p.stdzr = stdzr;
  auto [train, val] = split_train_val(z, 0.25, 1);
  p.train = std::move(train);
  p.val = std::move(val);
  return p;
}

ModelConfig small_model_config() {
  ModelConfig cfg;
  cfg.input_features = 2;
  cfg.edge_features = 2;
  cfg.hidden = 4;
  cfg.plan.rf = {4};
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("mse_loss averages the squared entries") {
  Mat r(2, 3), t(2, 3);
  r << 1., 2., 3., 4., 5., 6.;
  t << 1.5, 2., 2., 4., 7., 6.;
  Tensor recon = Tensor::matrix(r, true);
  Tensor loss = mse_loss(recon, Tensor::matrix(t));

  double sse = 0.;
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j) sse += (r(i, j) - t(i, j)) * (r(i, j) - t(i, j));
  CHECK(loss.item() == doctest::Approx(sse / 6.).epsilon(1e-15));

  backward(loss);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j)
      CHECK(recon.grad()(i, j) == doctest::Approx(2. * (r(i, j) - t(i, j)) / 6.).epsilon(1e-14));

  CHECK_THROWS_AS(mse_loss(recon, Tensor::matrix(Mat::Zero(3, 2))), DimensionError);
  CHECK_THROWS_AS(mse_loss(Tensor(), Tensor::matrix(t)), DimensionError);
}

TEST_CASE("train config validation") {
  TrainConfig ok;
  validate(ok);

  auto reject = [](auto&& mutate) {
    TrainConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  };
  reject([](TrainConfig& c) { c.batch_size = 0; });
  reject([](TrainConfig& c) { c.lr0 = -1.; });
  reject([](TrainConfig& c) { c.lr_decay = 0.; });
  reject([](TrainConfig& c) { c.lr_decay = 1.; });
  reject([](TrainConfig& c) { c.patience = 0; });
  reject([](TrainConfig& c) { c.max_epochs = 0; });
  reject([](TrainConfig& c) { c.jobs = 0; });
  reject([](TrainConfig& c) { c.improve_rel = -0.1; });
  reject([](TrainConfig& c) { c.clip_norm = 0.; });
  reject([](TrainConfig& c) { c.checkpoint_every = -1; });
}

TEST_CASE("fit reduces the loss and leaves best-epoch artifacts") {
  Problem p = make_problem();
  GaeModel model(small_model_config(), 4);

  const std::string dir = (fs::temp_directory_path() / "gae_fit_smoke").string();
  fs::remove_all(dir);
  fs::create_directories(dir);

  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.max_epochs = 8;
  cfg.lr0 = 3e-3;
  cfg.seed = 2;
  cfg.deterministic = true;
  cfg.out_dir = dir;
  FitResult res = fit(model, p.g0, p.train, p.val, cfg);

  REQUIRE(res.history.size() == 8);
  for (int e = 0; e < 8; ++e) CHECK(res.history[static_cast<std::size_t>(e)].epoch == e + 1);
  CHECK(res.history.back().train_mse < res.history.front().train_mse);

  double best = res.history.front().val_mse;
  int best_epoch = 1;
  for (const auto& row : res.history)
    if (row.val_mse < best) {
      best = row.val_mse;
      best_epoch = row.epoch;
    }
  CHECK(res.best_val == best);
  CHECK(res.best_epoch == best_epoch);

  // the model ends holding the best-val parameters: saving it now reproduces
  // best.ckpt byte for byte
  REQUIRE(fs::exists(dir + "/best.ckpt"));
  REQUIRE(fs::exists(dir + "/last.ckpt"));
  model.save(dir + "/resaved.ckpt");
  CHECK(slurp(dir + "/resaved.ckpt") == slurp(dir + "/best.ckpt"));

  // metrics.csv mirrors the history through the round-tripping formatter
  const Mat rows = read_csv(dir + "/metrics.csv",
                            {"epoch", "train_mse", "val_mse", "lr", "seconds"});
  REQUIRE(rows.rows() == 8);
  for (Index e = 0; e < 8; ++e) {
    const auto& h = res.history[static_cast<std::size_t>(e)];
    CHECK(rows(e, 0) == static_cast<double>(h.epoch));
    CHECK(rows(e, 1) == h.train_mse);
    CHECK(rows(e, 2) == h.val_mse);
    CHECK(rows(e, 3) == h.lr);
    CHECK(rows(e, 4) == 0.);  // deterministic mode zeroes wall times
  }
  fs::remove_all(dir);
}

TEST_CASE("deterministic runs are bit-identical") {
  Problem p = make_problem(40, 4);

  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.max_epochs = 3;
  cfg.seed = 9;
  cfg.deterministic = true;

  GaeModel a(small_model_config(), 7);
  GaeModel b(small_model_config(), 7);
  FitResult ra = fit(a, p.g0, p.train, p.val, cfg);
  FitResult rb = fit(b, p.g0, p.train, p.val, cfg);

  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    CHECK(ra.history[i].train_mse == rb.history[i].train_mse);
    CHECK(ra.history[i].val_mse == rb.history[i].val_mse);
    CHECK(ra.history[i].lr == rb.history[i].lr);
  }
  for (std::size_t i = 0; i < a.params().entries().size(); ++i)
    CHECK(max_abs_diff(a.params().entries()[i].param.value(),
                       b.params().entries()[i].param.value()) == 0.);
}

TEST_CASE("parallel member gradients match the batched path") {
  Problem p = make_problem(40, 4);

  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 2;
  cfg.seed = 5;
  cfg.deterministic = true;

  GaeModel seq(small_model_config(), 3);
  FitResult rs = fit(seq, p.g0, p.train, p.val, cfg);

  cfg.deterministic = false;
  cfg.jobs = 2;
  GaeModel par(small_model_config(), 3);
  FitResult rp = fit(par, p.g0, p.train, p.val, cfg);

  for (std::size_t i = 0; i < rs.history.size(); ++i) {
    CHECK(rp.history[i].train_mse ==
          doctest::Approx(rs.history[i].train_mse).epsilon(1e-9));
    CHECK(rp.history[i].val_mse == doctest::Approx(rs.history[i].val_mse).epsilon(1e-9));
  }
}

TEST_CASE("plateaus halve the learning rate") {
  Problem p = make_problem(40, 4);
  GaeModel model(small_model_config(), 6);

  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 4;
  cfg.lr0 = 1e-9;        // effectively frozen: no epoch clears the bar below
  cfg.improve_rel = 0.99;
  cfg.patience = 1;
  cfg.lr_decay = 0.5;
  cfg.deterministic = true;
  FitResult res = fit(model, p.g0, p.train, p.val, cfg);

  CHECK(res.history[0].lr == 1e-9);
  CHECK(res.history[1].lr == 1e-9);   // first epoch set the plateau baseline
  CHECK(res.history[2].lr == 5e-10);
  CHECK(res.history[3].lr == 2.5e-10);
}

TEST_CASE("fit input validation") {
  Problem p = make_problem(40, 4);
  GaeModel model(small_model_config(), 1);
  TrainConfig cfg;

  SnapshotSet empty;
  CHECK_THROWS_AS(fit(model, p.g0, empty, p.val, cfg), UsageError);
  CHECK_THROWS_AS(fit(model, p.g0, p.train, empty, cfg), UsageError);

  SnapshotSet wrong = p.train;
  for (Mat& s : wrong.snapshots) s = Mat::Zero(7, 2);
  CHECK_THROWS_AS(fit(model, p.g0, wrong, p.val, cfg), DimensionError);

  SnapshotSet wide = p.train;
  for (Mat& s : wide.snapshots) s = Mat::Zero(s.rows(), 3);
  CHECK_THROWS_AS(fit(model, p.g0, wide, p.val, cfg), DimensionError);

  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(fit(model, p.g0, p.train, p.val, bad), ConfigError);
}

TEST_CASE("evaluate_rmse matches a dense oracle") {
  Problem p = make_problem(40, 5);
  GaeModel model(small_model_config(), 8);

  const std::vector<double> rmse = evaluate_rmse(model, p.g0, p.train, p.stdzr);
  REQUIRE(rmse.size() == 2);

  // plain-loop oracle in physical units
  const Index n = p.train.nodes();
  const double m = static_cast<double>(p.train.size());
  double uin = p.train.u_in.front();
  std::vector<double> sse(2, 0.);
  for (const Mat& snap : p.train.snapshots) {
    Graph g = bind_snapshot(p.g0, snap);
    const Mat recon = model.decode(model.encode(g)).value();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < 2; ++j) {
        const double phys_r = recon(i, j) * p.stdzr.std(0, j) + p.stdzr.mean(0, j);
        const double phys_t = snap(i, j) * p.stdzr.std(0, j) + p.stdzr.mean(0, j);
        sse[static_cast<std::size_t>(j)] += (phys_r - phys_t) * (phys_r - phys_t);
      }
  }
  for (std::size_t j = 0; j < 2; ++j) {
    const double expect = std::sqrt(sse[j] / (m * static_cast<double>(n))) / uin;
    CHECK(std::abs(rmse[j] - expect) < 1e-12 * std::max(1., expect));
  }
}

TEST_CASE("rmse normalization falls back to the standardizer inlet speed") {
  Problem p = make_problem(40, 4);
  GaeModel model(small_model_config(), 8);

  const std::vector<double> base = evaluate_rmse(model, p.g0, p.train, p.stdzr);

  // mixed per-snapshot u_in: the set no longer offers a single speed
  SnapshotSet mixed = p.train;
  mixed.u_in[0] = 2. * mixed.u_in[1];
  Standardizer scaled = p.stdzr;
  scaled.u_in = 2. * p.stdzr.u_in;
  const std::vector<double> halved = evaluate_rmse(model, p.g0, mixed, scaled);
  for (std::size_t j = 0; j < base.size(); ++j)
    CHECK(halved[j] == doctest::Approx(base[j] * p.stdzr.u_in / scaled.u_in).epsilon(1e-12));

  Standardizer zero = p.stdzr;
  zero.u_in = 0.;
  CHECK_THROWS_AS(evaluate_rmse(model, p.g0, mixed, zero), ConfigError);

  SnapshotSet empty;
  CHECK_THROWS_AS(evaluate_rmse(model, p.g0, empty, p.stdzr), UsageError);
}

TEST_CASE("metrics file format") {
  std::vector<MetricsRow> history = {{1, 0.5, 0.25, 1e-3, 0.},
                                     {2, 0.125, 0.0625, 0.00048828125, 1.5}};
  const std::string path = (fs::temp_directory_path() / "gae_metrics_fmt.csv").string();
  write_metrics(path, history);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,train_mse,val_mse,lr,seconds");
  std::getline(in, line);
  CHECK(line == "1,0.5,0.25,0.001,0");
  std::getline(in, line);
  CHECK(line == "2,0.125,0.0625,0.00048828125,1.5");
  in.close();
  fs::remove(path);
}
