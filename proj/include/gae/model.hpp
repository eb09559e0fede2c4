#pragma once

#include "gae/coarsen.hpp"
#include "gae/mp.hpp"
#include "gae/pool.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gae {

struct ModelConfig {
  Index input_features = 2;   // width of the snapshot fields
  Index edge_features = 2;    // width of the input graph's edge attrs
  Index hidden = 32;          // shared node/edge hidden width
  ReductionPlan plan;         // Top-K levels; may be empty
  MmpSpec encoder_mmp;
  MmpSpec decoder_mmp;
  bool augment_pooled_adjacency = false;
};

void validate(const ModelConfig& cfg);

/// Everything encode produces: the deepest pooled graph plus the selection
/// chain decode and the masked-field export need.
struct LatentGraph {
  Graph graph;
  std::vector<TopKResult> chain;  // one entry per pooling level
};

struct AutoencodeResult {
  Tensor recon;             // N_0 x input_features
  std::vector<int> masked;  // per original node: deepest surviving level
  LatentGraph latent;
};

/// The autoencoder: feature embedding, per-level multiscale message passing
/// and Top-K pooling, mirrored unpooling, and feature decoding. Owns its
/// parameters; forward passes are pure given the parameter values.
class GaeModel {
 public:
  GaeModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  LatentGraph encode(const Graph& g0) const;
  Tensor decode(const LatentGraph& latent) const;
  AutoencodeResult autoencode(const Graph& g0) const;

  void save(const std::string& path) const { store_.save(path); }
  void load(const std::string& path) { store_.load(path); }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Mlp embed_v_, embed_e_, decode_v_;
  std::vector<MmpParams> enc_mmp_, dec_mmp_;  // levels 0..L
  std::vector<Tensor> proj_;                  // Top-K projection per level
  mutable CoarsenCache cache_;
};

}  // namespace gae
