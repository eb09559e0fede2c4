#include "gae/graph.hpp"

#include "gae/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>

namespace gae {

namespace {

// Reject centroids closer than this; coincident cells make radius search and
// voxel clustering ill-posed.
constexpr double kDuplicateTol = 1e-12;

void check_centroids(const Mat& c) {
  if (c.rows() < 1 || c.cols() != 2)
    throw InputError("mesh centroids must be an N x 2 matrix, got " +
                     std::to_string(c.rows()) + " x " + std::to_string(c.cols()));
  if (!c.allFinite()) throw InputError("mesh centroids contain non-finite values");

  // Lexicographic sort, then a window scan: any pair within tolerance has
  // x-coordinates within tolerance, so it shows up in the window.
  std::vector<Index> order(static_cast<std::size_t>(c.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (c(a, 0) != c(b, 0)) return c(a, 0) < c(b, 0);
    return c(a, 1) < c(b, 1);
  });
  const double tol2 = kDuplicateTol * kDuplicateTol;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const Index a = order[i], b = order[j];
      if (c(b, 0) - c(a, 0) > kDuplicateTol) break;
      const double dx = c(a, 0) - c(b, 0), dy = c(a, 1) - c(b, 1);
      if (dx * dx + dy * dy <= tol2)
        throw InputError("duplicate cell centroids at indices " + std::to_string(a) +
                         " and " + std::to_string(b));
    }
  }
}

struct CellKey {
  std::int64_t x, y;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y; }
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    auto h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ull;
    h ^= static_cast<std::uint64_t>(k.y) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

std::shared_ptr<const Adjacency> make_adjacency(std::vector<Index> senders,
                                                std::vector<Index> receivers,
                                                Index num_nodes) {
  if (senders.size() != receivers.size())
    throw UsageError("adjacency sender/receiver lists differ in length");
  if (num_nodes < 1) throw UsageError("adjacency needs at least one node");
  const std::size_t ne = senders.size();
  for (std::size_t k = 0; k < ne; ++k) {
    const Index s = senders[k], r = receivers[k];
    if (s < 0 || s >= num_nodes || r < 0 || r >= num_nodes)
      throw UsageError("adjacency edge " + std::to_string(k) + " out of range");
    if (s == r) throw UsageError("adjacency has a self-loop at node " + std::to_string(s));
    if (k > 0) {
      const Index ps = senders[k - 1], pr = receivers[k - 1];
      if (pr > r || (pr == r && ps >= s))
        throw UsageError("adjacency edges must be strictly sorted by (receiver, sender)");
    }
  }
  auto adj = std::make_shared<Adjacency>();
  adj->num_nodes = num_nodes;
  adj->senders = std::move(senders);
  adj->receivers = std::move(receivers);
  adj->row_ptr.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  for (Index r : adj->receivers) ++adj->row_ptr[static_cast<std::size_t>(r) + 1];
  for (std::size_t i = 1; i < adj->row_ptr.size(); ++i) adj->row_ptr[i] += adj->row_ptr[i - 1];
  return adj;
}

Graph with_attrs(const Graph& g, Tensor V, Tensor E) {
  if (V.defined() && V.rows() != g.num_nodes())
    throw DimensionError("node attributes have " + std::to_string(V.rows()) +
                         " rows for a graph with " + std::to_string(g.num_nodes()) + " nodes");
  if (E.defined() && E.rows() != g.num_edges())
    throw DimensionError("edge attributes have " + std::to_string(E.rows()) +
                         " rows for a graph with " + std::to_string(g.num_edges()) + " edges");
  Graph out = g;
  out.V = std::move(V);
  out.E = std::move(E);
  return out;
}

Graph build_input_graph(const MeshInput& mesh, const GraphBuildOptions& opts) {
  check_centroids(mesh.centroids);
  const Index n = mesh.centroids.rows();
  if (!(opts.radius > 0.) || !std::isfinite(opts.radius))
    throw ConfigError("graph radius must be positive and finite");

  std::vector<std::pair<Index, Index>> edges;  // (receiver, sender)
  edges.reserve(mesh.face_pairs.size() * 2 + static_cast<std::size_t>(n) * 8);
  for (std::size_t k = 0; k < mesh.face_pairs.size(); ++k) {
    const auto [a, b] = mesh.face_pairs[k];
    if (a < 0 || a >= n || b < 0 || b >= n)
      throw InputError("face pair " + std::to_string(k) + " references a missing cell");
    if (a == b) throw InputError("face pair " + std::to_string(k) + " joins a cell to itself");
    edges.emplace_back(a, b);
    edges.emplace_back(b, a);
  }

  // Radius connectivity via a hash grid with cell size = radius: every pair
  // within the radius lands in the same or an adjacent cell.
  const Mat& c = mesh.centroids;
  std::unordered_map<CellKey, std::vector<Index>, CellHash> grid;
  grid.reserve(static_cast<std::size_t>(n));
  auto key_of = [&](Index i) {
    return CellKey{static_cast<std::int64_t>(std::floor(c(i, 0) / opts.radius)),
                   static_cast<std::int64_t>(std::floor(c(i, 1) / opts.radius))};
  };
  for (Index i = 0; i < n; ++i) grid[key_of(i)].push_back(i);
  const double r2 = opts.radius * opts.radius;
  for (Index i = 0; i < n; ++i) {
    const CellKey k = key_of(i);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = grid.find(CellKey{k.x + dx, k.y + dy});
        if (it == grid.end()) continue;
        for (Index j : it->second) {
          if (j <= i) continue;
          const double ex = c(j, 0) - c(i, 0), ey = c(j, 1) - c(i, 1);
          if (ex * ex + ey * ey <= r2) {
            edges.emplace_back(i, j);
            edges.emplace_back(j, i);
          }
        }
      }
  }

  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  const double face_degree =
      std::max(1., 2. * static_cast<double>(mesh.face_pairs.size()) / static_cast<double>(n));
  const double cap_degree = opts.cap_mean_degree > 0. ? opts.cap_mean_degree : 10. * face_degree;
  if (static_cast<double>(edges.size()) > cap_degree * static_cast<double>(n))
    throw ConfigError("graph has " + std::to_string(edges.size()) + " edges, above the cap of " +
                      std::to_string(static_cast<Index>(cap_degree * static_cast<double>(n))) +
                      "; the connectivity radius is likely too large for this mesh");

  const Index ne = static_cast<Index>(edges.size());
  std::vector<Index> senders(edges.size()), receivers(edges.size());
  for (Index k = 0; k < ne; ++k) {
    receivers[static_cast<std::size_t>(k)] = edges[static_cast<std::size_t>(k)].first;
    senders[static_cast<std::size_t>(k)] = edges[static_cast<std::size_t>(k)].second;
  }

  Graph g;
  g.adj = make_adjacency(std::move(senders), std::move(receivers), n);
  g.pos = std::make_shared<Mat>(c);
  g.member_offsets = {0, n};
  g.level = 0;

  Mat e(ne, opts.append_norm ? 3 : 2);
  for (Index k = 0; k < ne; ++k) {
    const Index r = g.adj->receivers[static_cast<std::size_t>(k)];
    const Index s = g.adj->senders[static_cast<std::size_t>(k)];
    e(k, 0) = c(r, 0) - c(s, 0);
    e(k, 1) = c(r, 1) - c(s, 1);
    if (opts.append_norm) e(k, 2) = std::hypot(e(k, 0), e(k, 1));
  }
  g.E = Tensor::matrix(e, false);
  return g;
}

Graph bind_snapshot(const Graph& graph, const Mat& snapshot) {
  if (snapshot.rows() != graph.num_nodes())
    throw DimensionError("snapshot has " + std::to_string(snapshot.rows()) +
                         " rows for a graph with " + std::to_string(graph.num_nodes()) +
                         " nodes");
  if (snapshot.cols() < 1) throw DimensionError("snapshot needs at least one feature column");
  Graph out = graph;
  out.V = Tensor::matrix(snapshot, false);
  return out;
}

BatchedGraph batch_graphs(const std::vector<Graph>& graphs) {
  if (graphs.empty()) throw UsageError("cannot batch zero graphs");
  if (!graphs.front().V.defined() || !graphs.front().E.defined())
    throw UsageError("batch members must have node and edge attributes bound");
  const Index fv = graphs.front().V.cols();
  const Index fe = graphs.front().E.cols();

  Index nodes = 0, edges = 0;
  for (std::size_t b = 0; b < graphs.size(); ++b) {
    const Graph& g = graphs[b];
    if (!g.V.defined() || !g.E.defined() || g.V.cols() != fv || g.E.cols() != fe)
      throw DimensionError("batch member " + std::to_string(b) +
                           " has mismatched attribute widths");
    if (g.level != graphs.front().level)
      throw UsageError("batch members must share the same graph level");
    if (!g.pos) throw UsageError("batch members must carry node positions");
    nodes += g.num_nodes();
    edges += g.num_edges();
  }

  BatchedGraph out;
  out.offsets.assign(graphs.size() + 1, 0);
  out.graph_ids.assign(static_cast<std::size_t>(nodes), 0);

  Mat v(nodes, fv);
  Mat e(edges, fe);
  Mat pos(nodes, 2);
  std::vector<Index> senders(static_cast<std::size_t>(edges));
  std::vector<Index> receivers(static_cast<std::size_t>(edges));

  Index node_at = 0, edge_at = 0;
  for (std::size_t b = 0; b < graphs.size(); ++b) {
    const Graph& g = graphs[b];
    const Index n = g.num_nodes(), m = g.num_edges();
    v.middleRows(node_at, n) = g.V.value();
    if (m > 0) e.middleRows(edge_at, m) = g.E.value();
    pos.middleRows(node_at, n) = *g.pos;
    for (Index k = 0; k < m; ++k) {
      senders[static_cast<std::size_t>(edge_at + k)] =
          g.adj->senders[static_cast<std::size_t>(k)] + node_at;
      receivers[static_cast<std::size_t>(edge_at + k)] =
          g.adj->receivers[static_cast<std::size_t>(k)] + node_at;
    }
    std::fill_n(out.graph_ids.begin() + node_at, n, static_cast<int>(b));
    node_at += n;
    edge_at += m;
    out.offsets[b + 1] = node_at;
  }

  out.merged.V = Tensor::matrix(v, false);
  out.merged.E = Tensor::matrix(e, false);
  out.merged.adj = make_adjacency(std::move(senders), std::move(receivers), nodes);
  out.merged.pos = std::make_shared<Mat>(std::move(pos));
  out.merged.member_offsets = out.offsets;
  out.merged.level = graphs.front().level;
  return out;
}

std::vector<Graph> unbatch(const BatchedGraph& batch) {
  const Graph& g = batch.merged;
  if (batch.offsets.size() < 2 || batch.offsets.back() != g.num_nodes())
    throw UsageError("batched graph offsets do not cover the merged graph");
  std::vector<Graph> out;
  out.reserve(batch.offsets.size() - 1);

  const auto& recv = g.adj->receivers;
  const auto& send = g.adj->senders;
  for (std::size_t b = 0; b + 1 < batch.offsets.size(); ++b) {
    const Index lo = batch.offsets[b], hi = batch.offsets[b + 1];
    const Index n = hi - lo;
    // Receivers are globally sorted, so each member's edges are contiguous.
    const auto e_lo = std::lower_bound(recv.begin(), recv.end(), lo) - recv.begin();
    const auto e_hi = std::lower_bound(recv.begin(), recv.end(), hi) - recv.begin();
    std::vector<Index> s(static_cast<std::size_t>(e_hi - e_lo));
    std::vector<Index> r(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
      s[k] = send[static_cast<std::size_t>(e_lo) + k] - lo;
      r[k] = recv[static_cast<std::size_t>(e_lo) + k] - lo;
    }
    Graph m;
    m.adj = make_adjacency(std::move(s), std::move(r), n);
    m.pos = std::make_shared<Mat>(g.pos->middleRows(lo, n));
    m.V = Tensor::matrix(g.V.value().middleRows(lo, n), false);
    if (g.E.defined() && g.E.cols() > 0)
      m.E = Tensor::matrix(g.E.value().middleRows(e_lo, e_hi - e_lo), false);
    m.member_offsets = {0, n};
    m.level = g.level;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace gae
