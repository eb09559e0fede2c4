#pragma once

#include "gae/data.hpp"
#include "gae/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gae {

struct TrainConfig {
  int batch_size = 8;
  double lr0 = 1e-3;
  double lr_decay = 0.5;      // applied after `patience` epochs without improvement
  int patience = 10;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;   // rewrite last.ckpt every k epochs; 0 = only at the end
  int jobs = 1;               // >1 evaluates batch-member gradients in parallel
  bool deterministic = false; // sequential path, zero wall times in metrics
  double improve_rel = 1e-3;  // relative val improvement that resets the plateau
  double clip_norm = 1.0;     // global gradient norm cap
  bool verbose = false;       // one progress line per epoch on stdout
  std::string out_dir;        // metrics.csv / best.ckpt / last.ckpt; empty = no files
};

void validate(const TrainConfig& cfg);

struct MetricsRow {
  int epoch = 0;
  double train_mse = 0.;
  double val_mse = 0.;
  double lr = 0.;
  double seconds = 0.;
};

struct FitResult {
  std::vector<MetricsRow> history;
  double best_val = 0.;
  int best_epoch = 0;
};

/// Mean over all entries of the squared difference.
Tensor mse_loss(const Tensor& recon, const Tensor& target);

/// Mini-batched Adam over standardized snapshots on a fixed mesh topology.
/// Per epoch: seeded shuffle, batch, forward, backward, clipped Adam step,
/// then one validation pass driving the threshold LR schedule and the
/// best-checkpoint tracking. The model ends holding the best-val params.
FitResult fit(GaeModel& model, const Graph& g0, const SnapshotSet& train_set,
              const SnapshotSet& val_set, const TrainConfig& cfg);

/// Per-feature RMSE over the set, de-standardized to physical units and
/// normalized by the inlet freestream velocity (the set's own when uniform
/// and positive, else the standardizer's).
std::vector<double> evaluate_rmse(const GaeModel& model, const Graph& g0,
                                  const SnapshotSet& test_set, const Standardizer& stdzr);

void write_metrics(const std::string& path, const std::vector<MetricsRow>& history);

}  // namespace gae
