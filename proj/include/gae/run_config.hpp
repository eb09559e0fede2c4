#pragma once

#include "gae/graph.hpp"
#include "gae/model.hpp"
#include "gae/train.hpp"

#include <string>
#include <vector>

namespace gae {

/// One run's knobs: model architecture, graph construction, data handling,
/// and the training schedule, read from a flat `key = value` file.
struct RunConfig {
  // model
  Index hidden = 32;
  std::vector<int> reduction_factors = {16};
  std::vector<double> encoder_lengthscales = {0.16, 0.32, 0.64};
  std::vector<double> decoder_lengthscales = {0.16, 0.32, 0.64};
  int mp_per_fine_block = 2;
  int mp_per_coarse_block = 1;
  bool augment_pooled_adjacency = false;
  // graph construction
  double radius = 0.08;
  bool append_edge_norm = false;
  // data handling
  double val_fraction = 0.1;
  // optimization (out_dir comes from the command line, not the file)
  TrainConfig train;
  // ablation preset: "", model1, model2, model3
  std::string preset;
};

/// Assign one key; unknown keys and malformed values are config errors.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parse a config file (`key = value` lines, '#' comments, blank lines
/// ignored), then apply `overrides` ("key=value") in order. An empty path
/// yields the defaults plus overrides.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Resolve the ablation preset into the lengthscale lists. model1 clears
/// both, model2 clears the encoder's only, model3 keeps both non-empty;
/// a cleared-but-required list falls back to the default lengthscales.
/// Idempotent; unknown presets are config errors.
void apply_preset(RunConfig& cfg);

/// Frozen copy of the merged configuration, one key per line, sorted.
/// Parsing the lock back reproduces `cfg` exactly.
void write_config_lock(const std::string& path, const RunConfig& cfg);

ModelConfig make_model_config(const RunConfig& cfg, Index input_features, Index edge_features);
GraphBuildOptions make_graph_options(const RunConfig& cfg);

}  // namespace gae
