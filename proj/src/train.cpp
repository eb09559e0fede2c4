#include "gae/train.hpp"

#include "gae/csv.hpp"
#include "gae/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_map>

namespace gae {

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(cfg.lr0 >= 0.) || !std::isfinite(cfg.lr0))
    throw ConfigError("initial learning rate must be finite and non-negative");
  if (!(cfg.lr_decay > 0.) || !(cfg.lr_decay < 1.))
    throw ConfigError("learning rate decay must be in (0, 1)");
  if (cfg.patience < 1) throw ConfigError("patience must be at least 1");
  if (cfg.max_epochs < 1) throw ConfigError("need at least one epoch");
  if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");
  if (!(cfg.improve_rel >= 0.)) throw ConfigError("improvement threshold must be non-negative");
  if (!(cfg.clip_norm > 0.)) throw ConfigError("gradient clip norm must be positive");
  if (cfg.checkpoint_every < 0) throw ConfigError("checkpoint interval must be non-negative");
}

Tensor mse_loss(const Tensor& recon, const Tensor& target) {
  if (!recon.defined() || !target.defined() || recon.rows() != target.rows() ||
      recon.cols() != target.cols())
    throw DimensionError("mse_loss operands must share their shape");
  return mean_all(square(sub(recon, target)));
}

namespace {

// Batched topologies are rebuilt only per distinct batch size; rebinding V
// keeps the adjacency pointer stable so voxel clusterings stay cached.
struct BatchProtos {
  const Graph* g0;
  std::unordered_map<Index, BatchedGraph> by_size;

  const BatchedGraph& get(Index members) {
    auto it = by_size.find(members);
    if (it != by_size.end()) return it->second;
    Graph bound = bind_snapshot(*g0, Mat::Zero(g0->num_nodes(), 1));
    std::vector<Graph> copies(static_cast<std::size_t>(members), bound);
    return by_size.emplace(members, batch_graphs(copies)).first->second;
  }
};

Mat stack_rows(const SnapshotSet& set, const std::vector<std::size_t>& ids, std::size_t lo,
               std::size_t hi) {
  const Index n = set.nodes();
  Mat out(static_cast<Index>(hi - lo) * n, set.features());
  for (std::size_t k = lo; k < hi; ++k)
    out.middleRows(static_cast<Index>(k - lo) * n, n) = set.snapshots[ids[k]];
  return out;
}

double batched_mse(const GaeModel& model, BatchProtos& protos, const Mat& stacked,
                   Index members) {
  Graph g = bind_snapshot(protos.get(members).merged, stacked);
  Tensor recon = model.decode(model.encode(g));
  return mse_loss(recon, Tensor::matrix(stacked, false)).item();
}

}  // namespace

FitResult fit(GaeModel& model, const Graph& g0, const SnapshotSet& train_set,
              const SnapshotSet& val_set, const TrainConfig& cfg) {
  validate(cfg);
  validate(train_set);
  validate(val_set);
  if (train_set.snapshots.empty()) throw UsageError("fit needs at least one training snapshot");
  if (val_set.snapshots.empty()) throw UsageError("fit needs a non-empty validation set");
  if (train_set.nodes() != g0.num_nodes() || val_set.nodes() != g0.num_nodes())
    throw DimensionError("snapshot row counts do not match the mesh graph");
  if (train_set.features() != model.config().input_features)
    throw DimensionError("snapshot width does not match the model's input features");

  const bool parallel = cfg.jobs > 1 && !cfg.deterministic;
  const std::size_t m = train_set.size();
  const Index n = train_set.nodes();
  const Index f = train_set.features();

  BatchProtos protos{&g0, {}};
  ParamStore& store = model.params();

  // Fixed validation batches.
  std::vector<std::size_t> val_ids(val_set.size());
  std::iota(val_ids.begin(), val_ids.end(), std::size_t{0});
  std::vector<Mat> val_batches;
  for (std::size_t lo = 0; lo < val_set.size(); lo += static_cast<std::size_t>(cfg.batch_size))
    val_batches.push_back(stack_rows(val_set, val_ids, lo,
                                     std::min(val_set.size(),
                                              lo + static_cast<std::size_t>(cfg.batch_size))));

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);

  FitResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  double lr = cfg.lr0;
  double sched_best = std::numeric_limits<double>::infinity();
  int plateau = 0;
  std::vector<Mat> best_values;

  const std::string metrics_path = cfg.out_dir.empty() ? "" : cfg.out_dir + "/metrics.csv";
  const std::string best_path = cfg.out_dir.empty() ? "" : cfg.out_dir + "/best.ckpt";
  const std::string last_path = cfg.out_dir.empty() ? "" : cfg.out_dir + "/last.ckpt";

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);

    double train_sse = 0.;
    double train_entries = 0.;
    int batch_index = 0;
    for (std::size_t lo = 0; lo < m; lo += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t hi = std::min(m, lo + static_cast<std::size_t>(cfg.batch_size));
      const Index members = static_cast<Index>(hi - lo);
      try {
        double batch_mse = 0.;
        if (!parallel) {
          Mat stacked = stack_rows(train_set, order, lo, hi);
          Graph g = bind_snapshot(protos.get(members).merged, stacked);
          Tensor loss = mse_loss(model.decode(model.encode(g)), Tensor::matrix(stacked, false));
          store.zero_grad();
          backward(loss);
          batch_mse = loss.item();
        } else {
          std::vector<GradSink> sinks(static_cast<std::size_t>(members));
          std::vector<double> losses(static_cast<std::size_t>(members), 0.);
          std::atomic<Index> next{0};
          auto worker = [&]() {
            for (Index i = next.fetch_add(1); i < members; i = next.fetch_add(1)) {
              Graph g = bind_snapshot(g0, train_set.snapshots[order[lo + static_cast<std::size_t>(i)]]);
              Tensor loss = mse_loss(model.decode(model.encode(g)), g.V);
              backward(loss, sinks[static_cast<std::size_t>(i)]);
              losses[static_cast<std::size_t>(i)] = loss.item();
            }
          };
          std::vector<std::thread> threads;
          const int nt = std::min<int>(cfg.jobs, static_cast<int>(members));
          threads.reserve(static_cast<std::size_t>(nt));
          for (int t = 0; t < nt; ++t) threads.emplace_back(worker);
          for (auto& t : threads) t.join();
          store.zero_grad();
          const double w = 1.0 / static_cast<double>(members);
          for (Index i = 0; i < members; ++i) {
            store.accumulate_sink(sinks[static_cast<std::size_t>(i)], w);
            batch_mse += losses[static_cast<std::size_t>(i)] * w;
          }
        }
        store.clip_grad_norm(cfg.clip_norm);
        store.adam_step(lr);
        const double entries = static_cast<double>(members * n * f);
        train_sse += batch_mse * entries;
        train_entries += entries;
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ", lr " + format_g17(lr) + ": " +
                           e.what());
      }
    }
    const double train_mse = train_sse / train_entries;

    double val_sse = 0.;
    double val_entries = 0.;
    for (const Mat& stacked : val_batches) {
      const Index members = stacked.rows() / n;
      val_sse += batched_mse(model, protos, stacked, members) *
                 static_cast<double>(stacked.rows() * f);
      val_entries += static_cast<double>(stacked.rows() * f);
    }
    const double val_mse = val_sse / val_entries;

    const double seconds =
        cfg.deterministic
            ? 0.
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back({epoch, train_mse, val_mse, lr, seconds});
    if (!metrics_path.empty()) write_metrics(metrics_path, result.history);
    if (cfg.verbose) {
      std::printf("epoch %4d  train %.6e  val %.6e  lr %.3e  %.1fs\n", epoch, train_mse, val_mse,
                  lr, seconds);
      std::fflush(stdout);
    }

    if (val_mse < result.best_val) {
      result.best_val = val_mse;
      result.best_epoch = epoch;
      best_values.clear();
      for (const auto& e : store.entries()) best_values.push_back(e.param.value());
      if (!best_path.empty()) store.save(best_path);
    }
    if (val_mse < sched_best * (1. - cfg.improve_rel)) {
      sched_best = val_mse;
      plateau = 0;
    } else if (++plateau >= cfg.patience) {
      lr *= cfg.lr_decay;
      plateau = 0;
    }
    if (!last_path.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
      store.save(last_path);
  }

  if (!last_path.empty()) store.save(last_path);
  if (!best_values.empty()) {
    const auto& entries = store.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      Tensor t = entries[i].param;
      t.set_value(best_values[i]);
    }
  }
  return result;
}

std::vector<double> evaluate_rmse(const GaeModel& model, const Graph& g0,
                                  const SnapshotSet& test_set, const Standardizer& stdzr) {
  validate(test_set);
  if (test_set.snapshots.empty()) throw UsageError("evaluate_rmse needs at least one snapshot");
  if (test_set.nodes() != g0.num_nodes())
    throw DimensionError("snapshot row counts do not match the mesh graph");

  double u_in = test_set.u_in.front();
  for (double u : test_set.u_in)
    if (u != u_in) u_in = 0.;
  if (!(u_in > 0.)) u_in = stdzr.u_in;
  if (!(u_in > 0.))
    throw ConfigError("no positive inlet velocity available for RMSE normalization");

  const Index f = test_set.features();
  Eigen::RowVectorXd sse = Eigen::RowVectorXd::Zero(f);
  for (const Mat& snap : test_set.snapshots) {
    Graph g = bind_snapshot(g0, snap);
    const Mat recon = model.decode(model.encode(g)).value();
    const Mat diff = stdzr.invert_rows(recon) - stdzr.invert_rows(snap);
    sse += diff.array().square().colwise().sum().matrix();
  }
  const double count = static_cast<double>(test_set.size()) * static_cast<double>(test_set.nodes());
  std::vector<double> rmse(static_cast<std::size_t>(f));
  for (Index i = 0; i < f; ++i)
    rmse[static_cast<std::size_t>(i)] = std::sqrt(sse(i) / count) / u_in;
  return rmse;
}

void write_metrics(const std::string& path, const std::vector<MetricsRow>& history) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path);
  out << "epoch,train_mse,val_mse,lr,seconds\n";
  for (const auto& row : history)
    out << row.epoch << ',' << format_g17(row.train_mse) << ',' << format_g17(row.val_mse) << ','
        << format_g17(row.lr) << ',' << format_g17(row.seconds) << '\n';
  if (!out) throw IngestError("failed while writing " + path);
}

}  // namespace gae
