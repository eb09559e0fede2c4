#pragma once

#include "gae/graph.hpp"
#include "gae/nn.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

namespace gae {

/// Parent-child assignment between a graph and its voxel-coarsened copy,
/// plus the interpolation stencil displacements. Immutable after build;
/// attribute transfer happens in the ops below, so one map serves every
/// forward pass on the same topology.
struct CoarseMap {
  double lengthscale = 0.;
  std::vector<Index> parent_of;               // fine node -> coarse node
  std::shared_ptr<const Mat> parent_pos;      // occupied-voxel cell centers
  std::shared_ptr<const Adjacency> coarse_adj;
  std::vector<Index> fine_to_coarse_edge;     // -1 for intra-voxel fine edges
  std::vector<Index> member_offsets;          // coarse nodes per batch member
  Tensor disp;                                // child pos - parent pos, constant N_fine x 2
  Tensor neg_disp;                            // parent pos - child pos

  Index num_coarse() const { return coarse_adj ? coarse_adj->num_nodes : 0; }
};

/// Bin nodes into a uniform voxel grid of the given lengthscale anchored at
/// each member's position bounding-box minimum (half-open intervals, floor).
/// `bbox` overrides the anchor for every member: row 0 is the minimum corner,
/// row 1 the maximum. Occupied voxels become parents at their cell centers,
/// ordered by (member, grid x, grid y); coarse edge (u, v) exists when some
/// fine edge joins a child of u to a child of v, u != v.
CoarseMap voxel_cluster(const Graph& fine, double lengthscale,
                        const std::optional<Mat>& bbox = std::nullopt);

/// Per-coarse-edge mean of the contributing fine edge attributes.
Tensor coarse_edge_attrs(const Tensor& fine_E, const CoarseMap& map);

/// Per parent, the mean over its children of mlp(child attrs | child
/// displacement from the parent voxel center).
Tensor transfer_fine_to_coarse(const Mlp& mlp, const Tensor& fine_attrs, const CoarseMap& map);

/// Per child, mlp(parent attrs | parent displacement from the child) plus
/// the skip term carried down from the same level.
Tensor transfer_coarse_to_fine(const Mlp& mlp, const Tensor& coarse_attrs,
                               const Tensor& fine_skip, const CoarseMap& map);

/// Coarse graph over a map: node attrs from the transfer MLP, edge attrs as
/// contributing-edge means; keeps the fine graph's pooling level.
Graph coarse_graph(const Graph& fine, const CoarseMap& map, const Mlp& f2c);

/// Memoizes voxel_cluster per (adjacency identity, lengthscale). Pooled
/// graphs (level > 0) change topology between snapshots, so those are
/// computed fresh each call. Thread safe.
class CoarsenCache {
 public:
  std::shared_ptr<const CoarseMap> get(const Graph& g, double lengthscale);

 private:
  struct Entry {
    std::shared_ptr<const Adjacency> key_alive;  // pins the keyed address
    std::shared_ptr<const CoarseMap> map;
  };
  std::map<std::pair<const void*, std::uint64_t>, Entry> entries_;
  std::mutex mutex_;
};

}  // namespace gae
