#pragma once

#include "gae/graph.hpp"

#include <vector>

namespace gae {

/// Outcome of one adaptive pooling level: the selected original-node ids
/// (ascending), the gated induced subgraph, the projection scores, and the
/// parent bookkeeping unpooling needs.
struct TopKResult {
  std::vector<Index> indices;          // size K, strictly increasing
  Graph pooled;                        // level = parent level + 1
  Tensor y;                            // projection scores, N_parent x 1
  std::vector<Index> edge_parent_ids;  // pooled edge -> parent edge id, -1 if synthesized
  std::shared_ptr<const Adjacency> parent_adj;
  std::shared_ptr<const Mat> parent_pos;
  std::vector<Index> member_offsets_parent;
};

/// Score y = V p / |p|, keep each member's K largest (ties to the lower node
/// id), gate kept rows by sigmoid(y), and take the induced subgraph with
/// edge attrs carried over. With `augment` set, a kept node left isolated
/// gains its 2-hop kept neighbors as edges whose first two attr channels
/// hold the node displacement.
TopKResult topk_pool(const Graph& g, const Tensor& p, const std::vector<Index>& k_per_member,
                     bool augment = false);

/// Single-member convenience overload.
TopKResult topk_pool(const Graph& g, const Tensor& p, Index k, bool augment = false);

/// Per-level reduction factors; level l keeps floor(N_l / rf[l]) nodes
/// (at least one) per member.
struct ReductionPlan {
  std::vector<int> rf;

  int levels() const { return static_cast<int>(rf.size()); }
};

void validate(const ReductionPlan& plan);

/// Node counts per level for a mesh of n0 nodes under the floor rule.
std::vector<Index> level_sizes(const ReductionPlan& plan, Index n0);

/// Delta-distribute: a parent-shaped graph whose node rows at the selected
/// indices (and edge rows at the surviving parent edge ids) hold the pooled
/// attributes, zeros elsewhere.
Graph unpool(const Tensor& pooled_V, const Tensor& pooled_E, const TopKResult& r);

/// Per original node, the deepest level whose composed selection chain
/// still contains it; zero when dropped at the first level.
std::vector<int> masked_field(const std::vector<TopKResult>& chain, Index n0);

}  // namespace gae
