#pragma once

#include "gae/tensor.hpp"

#include <memory>
#include <utility>
#include <vector>

namespace gae {

/// Directed edge structure, stored sorted by (receiver, sender) with a CSR
/// index over receivers. Immutable once built; graphs share it by pointer.
struct Adjacency {
  Index num_nodes = 0;
  std::vector<Index> senders;
  std::vector<Index> receivers;
  std::vector<Index> row_ptr;  // receiver i's edges live in [row_ptr[i], row_ptr[i+1])

  Index num_edges() const { return static_cast<Index>(senders.size()); }
};

/// Validate an edge list (in-range, no self-loops, sorted by (receiver,
/// sender), no duplicates) and build the CSR index.
std::shared_ptr<const Adjacency> make_adjacency(std::vector<Index> senders,
                                                std::vector<Index> receivers,
                                                Index num_nodes);

/// A (possibly batched) attributed graph. V may be undefined on topology-only
/// graphs; E always matches the adjacency's edge count.
struct Graph {
  Tensor V;
  Tensor E;
  std::shared_ptr<const Adjacency> adj;
  std::shared_ptr<const Mat> pos;      // num_nodes x 2
  std::vector<Index> member_offsets;   // size B+1; {0, N} for a single graph
  int level = 0;

  Index num_nodes() const { return adj ? adj->num_nodes : 0; }
  Index num_edges() const { return adj ? adj->num_edges() : 0; }
  Index members() const { return static_cast<Index>(member_offsets.size()) - 1; }
};

/// Same topology and positions, new attributes.
Graph with_attrs(const Graph& g, Tensor V, Tensor E);

/// Finite-volume mesh: cell centroids plus unordered pairs of cells that
/// share a face.
struct MeshInput {
  Mat centroids;  // N x 2
  std::vector<std::pair<Index, Index>> face_pairs;
};

struct GraphBuildOptions {
  double radius = 0.08;         // radius connectivity, in mesh units
  bool append_norm = false;     // append edge length as a third edge feature
  double cap_mean_degree = 0.;  // edge cap multiplier; 0 = 10 * max(1, mean face degree)
};

/// Directed graph over cell centroids: face-pair edges (both directions)
/// union radius connectivity, deduplicated, no self-loops. Edge features are
/// receiver minus sender positions. Radius search uses a spatial hash grid.
Graph build_input_graph(const MeshInput& mesh, const GraphBuildOptions& opts = {});

/// Copy of `graph` with V bound to one snapshot (num_nodes x F, constant).
Graph bind_snapshot(const Graph& graph, const Mat& snapshot);

/// Disjoint union of same-width graphs with index offsets applied; no edges
/// cross members.
struct BatchedGraph {
  Graph merged;
  std::vector<Index> offsets;   // size B+1
  std::vector<int> graph_ids;   // per node
};

BatchedGraph batch_graphs(const std::vector<Graph>& graphs);

/// Split a batched graph back into its members (values equal the originals).
std::vector<Graph> unbatch(const BatchedGraph& batch);

}  // namespace gae
