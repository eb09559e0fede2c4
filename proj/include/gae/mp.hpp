#pragma once

#include "gae/coarsen.hpp"
#include "gae/graph.hpp"
#include "gae/nn.hpp"

#include <string>
#include <utility>
#include <vector>

namespace gae {

/// One message-passing layer: a two-layer edge updater over (edge | sender |
/// receiver) and a two-layer node updater over (node | aggregate), both
/// layer-normalized. First-affine weights are stored as column blocks of the
/// concatenated form (we_e/we_s/we_r and wv_v/wv_a), which lets the sender
/// and receiver products be computed once per node rather than once per
/// edge; the result is identical to the concatenated affine.
struct MpLayerParams {
  Tensor we_e, we_s, we_r, be1;
  Tensor we2, be2, ln_e_g, ln_e_b;
  Tensor wv_v, wv_a, bv1;
  Tensor wv2, bv2, ln_v_g, ln_v_b;
};

MpLayerParams make_mp_params(ParamStore& store, const std::string& prefix, Index f, Rng& rng);

/// e'_k = f_e(e_k | v_send | v_recv); a_i = mean of incoming e' (zero for
/// isolated nodes); v'_i = f_v(v_i | a_i). Returns (V', E'); the adjacency
/// is untouched.
std::pair<Tensor, Tensor> mp_layer(const Graph& g, const MpLayerParams& params);

/// Sequential mp_layer applications with per-layer parameters.
std::pair<Tensor, Tensor> mp_block(const Graph& g, const std::vector<MpLayerParams>& layers);

/// Shape of one multiscale layer: a U-net of message-passing blocks over
/// voxel-coarsened copies of the graph. Empty lengthscales degenerate to a
/// single-scale stack of 2 * mp_per_fine_block layers.
struct MmpSpec {
  std::vector<double> lengthscales;  // strictly increasing
  int mp_per_fine_block = 2;
  int mp_per_coarse_block = 1;
};

void validate(const MmpSpec& spec);

struct MmpScaleParams {
  double lengthscale = 0.;
  std::vector<MpLayerParams> down, up;
  Mlp f2c, c2f;
};

struct MmpParams {
  std::vector<MpLayerParams> fine_down, fine_up;
  std::vector<MmpScaleParams> scales;
};

MmpParams make_mmp_params(ParamStore& store, const std::string& prefix, Index f,
                          const MmpSpec& spec, Rng& rng);

/// Downward pass: fine block, then per lengthscale cluster / transfer down /
/// coarse block. Upward pass mirrors it, adding node skips from the
/// downward pass and reusing its cached edge attrs, then runs the final
/// fine block. Pass a cache to reuse voxel clusterings across forwards.
std::pair<Tensor, Tensor> mmp_layer(const Graph& g, const MmpParams& params,
                                    CoarsenCache* cache = nullptr);

}  // namespace gae
