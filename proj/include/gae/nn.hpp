#pragma once

#include "gae/rng.hpp"
#include "gae/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace gae {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// MLP architecture: layer_widths = [d_in, hidden..., d_out] (>= 2 entries),
/// ELU between affine layers, no final activation, optional layer norm on
/// the output. A residual connection from input to output is added exactly
/// when d_in == d_out, after the layer norm.
struct MlpSpec {
  std::vector<Index> layer_widths;
  bool layer_norm_after = true;
};

/// An MLP's parameter handles; weights[i] is [w_i x w_{i+1}].
struct Mlp {
  MlpSpec spec;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Tensor ln_gain, ln_bias;  // defined iff spec.layer_norm_after
};

/// Ordered registry of named differentiable leaves plus Adam state.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor param;
    int rank = 2;  // serialization tag: 0 scalar, 1 vector, 2 matrix
    Mat m, v;      // Adam first/second moment, same shape as the value
    long step = 0;
  };

  /// Register a new parameter; rank tags serialization (0/1/2).
  /// Names must be unique; registration order is the storage order.
  Tensor create(const std::string& name, Mat init, int rank = 2);

  bool contains(const std::string& name) const;
  Tensor at(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t count() const { return entries_.size(); }
  std::size_t total_values() const;

  void zero_grad();
  /// Global L2 norm over all parameter gradients.
  double grad_norm() const;
  /// Scale all gradients by max_norm / norm when norm exceeds max_norm.
  void clip_grad_norm(double max_norm);
  /// Bias-corrected Adam update from the accumulated gradients.
  /// lr == 0 is the identity; lr < 0 or non-finite is a config error.
  void adam_step(double lr, double beta1 = kAdamBeta1, double beta2 = kAdamBeta2, double eps = kAdamEps);

  /// Accumulate a gradient sink (from backward(loss, sink)) into the leaf
  /// accumulators, scaled by `weight`, in registration order.
  void accumulate_sink(const GradSink& sink, double weight = 1.0);

  /// Binary checkpoint, magic "GAE1". save -> load -> save is byte-identical.
  void save(const std::string& path) const;
  /// Assign values from a checkpoint into the existing registry; name set,
  /// ranks, and shapes must match exactly. Adam state is reset.
  void load(const std::string& path);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Glorot-uniform matrix in +-sqrt(6 / (fan_in + fan_out)).
Mat glorot(Index fan_in, Index fan_out, Rng& rng);

/// Glorot-uniform block of an affine whose full input width is `fan_in`;
/// used when a concatenated-input weight matrix is stored as column blocks.
Mat glorot_block(Index rows, Index cols, Index fan_in, Index fan_out, Rng& rng);

/// Register an MLP's parameters under `prefix` (weights Glorot, biases zero,
/// layer norm gain one / bias zero).
Mlp make_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng);

/// Look up an existing MLP registered under `prefix`.
Mlp find_mlp(const ParamStore& store, const std::string& prefix, const MlpSpec& spec);

/// Batched row-wise MLP evaluation.
Tensor mlp_apply(const Mlp& mlp, const Tensor& x);

}  // namespace gae
