#include "gae/pool.hpp"

#include "gae/error.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <tuple>

namespace gae {

namespace {

// Selected ids for one member: the K largest scores, ties to the lower id,
// returned ascending.
void select_member(const Mat& y, Index lo, Index hi, Index k, std::vector<Index>& out) {
  std::vector<Index> ids(static_cast<std::size_t>(hi - lo));
  std::iota(ids.begin(), ids.end(), lo);
  std::sort(ids.begin(), ids.end(), [&](Index a, Index b) {
    if (y(a, 0) != y(b, 0)) return y(a, 0) > y(b, 0);
    return a < b;
  });
  ids.resize(static_cast<std::size_t>(k));
  std::sort(ids.begin(), ids.end());
  out.insert(out.end(), ids.begin(), ids.end());
}

}  // namespace

TopKResult topk_pool(const Graph& g, const Tensor& p, const std::vector<Index>& k_per_member,
                     bool augment) {
  if (!g.V.defined() || !g.E.defined())
    throw UsageError("topk_pool needs bound node and edge attributes");
  if (!p.defined() || p.cols() != 1 || p.rows() != g.V.cols())
    throw DimensionError("projection vector must be " + std::to_string(g.V.cols()) + " x 1");
  if (static_cast<Index>(k_per_member.size()) != g.members())
    throw UsageError("one K per batch member required");

  TopKResult r;
  r.y = matmul(g.V, unit_normalize(p));
  const Mat& yv = r.y.value();

  std::vector<Index> pooled_offsets{0};
  for (Index m = 0; m < g.members(); ++m) {
    const Index lo = g.member_offsets[static_cast<std::size_t>(m)];
    const Index hi = g.member_offsets[static_cast<std::size_t>(m) + 1];
    const Index k = k_per_member[static_cast<std::size_t>(m)];
    if (k < 1 || k > hi - lo)
      throw UsageError("K = " + std::to_string(k) + " outside [1, " + std::to_string(hi - lo) +
                       "] for member " + std::to_string(m));
    select_member(yv, lo, hi, k, r.indices);
    pooled_offsets.push_back(pooled_offsets.back() + k);
  }
  const Index nk = static_cast<Index>(r.indices.size());

  // Gate the kept rows: V[I] scaled per row by sigmoid(y[I]).
  Tensor vk = row_scale(gather_rows(g.V, r.indices), sigmoid(gather_rows(r.y, r.indices)));

  // Induced subgraph. The remap is monotone, so parent edge order (already
  // sorted by receiver then sender) is preserved.
  std::vector<Index> new_id(static_cast<std::size_t>(g.num_nodes()), -1);
  for (Index i = 0; i < nk; ++i) new_id[static_cast<std::size_t>(r.indices[i])] = i;

  struct PooledEdge {
    Index recv, send, parent_id;
    bool operator<(const PooledEdge& o) const {
      return std::tie(recv, send) < std::tie(o.recv, o.send);
    }
  };
  std::vector<PooledEdge> edges;
  for (Index k = 0; k < g.num_edges(); ++k) {
    const Index ns = new_id[static_cast<std::size_t>(g.adj->senders[static_cast<std::size_t>(k)])];
    const Index nr = new_id[static_cast<std::size_t>(g.adj->receivers[static_cast<std::size_t>(k)])];
    if (ns >= 0 && nr >= 0) edges.push_back({nr, ns, k});
  }

  std::vector<PooledEdge> synth;
  if (augment) {
    std::vector<char> attached(static_cast<std::size_t>(nk), 0);
    for (const auto& e : edges) {
      attached[static_cast<std::size_t>(e.recv)] = 1;
      attached[static_cast<std::size_t>(e.send)] = 1;
    }
    for (Index ni = 0; ni < nk; ++ni) {
      if (attached[static_cast<std::size_t>(ni)]) continue;
      const Index pi = r.indices[static_cast<std::size_t>(ni)];
      // Kept nodes two hops away in the parent graph.
      for (Index ek = g.adj->row_ptr[static_cast<std::size_t>(pi)];
           ek < g.adj->row_ptr[static_cast<std::size_t>(pi) + 1]; ++ek) {
        const Index mid = g.adj->senders[static_cast<std::size_t>(ek)];
        for (Index em = g.adj->row_ptr[static_cast<std::size_t>(mid)];
             em < g.adj->row_ptr[static_cast<std::size_t>(mid) + 1]; ++em) {
          const Index src = g.adj->senders[static_cast<std::size_t>(em)];
          const Index nsrc = new_id[static_cast<std::size_t>(src)];
          if (nsrc < 0 || nsrc == ni) continue;
          synth.push_back({ni, nsrc, -1});
          synth.push_back({nsrc, ni, -1});
        }
      }
    }
    std::sort(synth.begin(), synth.end());
    synth.erase(std::unique(synth.begin(), synth.end(),
                            [](const PooledEdge& a, const PooledEdge& b) {
                              return a.recv == b.recv && a.send == b.send;
                            }),
                synth.end());
    if (!synth.empty() && g.E.cols() < 2)
      throw ConfigError("augmented pooling needs at least two edge attr channels");
  }

  if (!synth.empty()) {
    edges.insert(edges.end(), synth.begin(), synth.end());
    std::sort(edges.begin(), edges.end());
  }

  std::vector<Index> es(edges.size()), er(edges.size());
  r.edge_parent_ids.resize(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    er[k] = edges[k].recv;
    es[k] = edges[k].send;
    r.edge_parent_ids[k] = edges[k].parent_id;
  }

  Tensor ek;
  if (synth.empty()) {
    ek = gather_rows(g.E, r.edge_parent_ids);
  } else {
    // Carried rows scattered into their slots plus a constant holding the
    // synthesized displacement features.
    std::vector<Index> carried_ids, carried_slots;
    Mat synth_attrs = Mat::Zero(static_cast<Index>(edges.size()), g.E.cols());
    for (std::size_t k = 0; k < edges.size(); ++k) {
      if (edges[k].parent_id >= 0) {
        carried_ids.push_back(edges[k].parent_id);
        carried_slots.push_back(static_cast<Index>(k));
      } else {
        const Index pr = r.indices[static_cast<std::size_t>(edges[k].recv)];
        const Index ps = r.indices[static_cast<std::size_t>(edges[k].send)];
        synth_attrs(static_cast<Index>(k), 0) = (*g.pos)(pr, 0) - (*g.pos)(ps, 0);
        synth_attrs(static_cast<Index>(k), 1) = (*g.pos)(pr, 1) - (*g.pos)(ps, 1);
      }
    }
    ek = add(scatter_rows(gather_rows(g.E, carried_ids), carried_slots,
                          static_cast<Index>(edges.size())),
             Tensor::matrix(std::move(synth_attrs), false));
  }

  auto pooled_pos = std::make_shared<Mat>(nk, 2);
  for (Index i = 0; i < nk; ++i)
    pooled_pos->row(i) = g.pos->row(r.indices[static_cast<std::size_t>(i)]);

  r.pooled.V = vk;
  r.pooled.E = ek;
  r.pooled.adj = make_adjacency(std::move(es), std::move(er), nk);
  r.pooled.pos = std::move(pooled_pos);
  r.pooled.member_offsets = std::move(pooled_offsets);
  r.pooled.level = g.level + 1;
  r.parent_adj = g.adj;
  r.parent_pos = g.pos;
  r.member_offsets_parent = g.member_offsets;
  return r;
}

TopKResult topk_pool(const Graph& g, const Tensor& p, Index k, bool augment) {
  if (g.members() != 1)
    throw UsageError("single-K topk_pool requires a single-member graph");
  return topk_pool(g, p, std::vector<Index>{k}, augment);
}

void validate(const ReductionPlan& plan) {
  for (int rf : plan.rf)
    if (rf < 1) throw ConfigError("reduction factors must be at least 1");
}

std::vector<Index> level_sizes(const ReductionPlan& plan, Index n0) {
  validate(plan);
  if (n0 < 1) throw UsageError("level_sizes needs a positive node count");
  std::vector<Index> sizes{n0};
  for (int rf : plan.rf) sizes.push_back(std::max<Index>(1, sizes.back() / rf));
  return sizes;
}

Graph unpool(const Tensor& pooled_V, const Tensor& pooled_E, const TopKResult& r) {
  if (!r.parent_adj) throw UsageError("unpool needs a pooling result with parent topology");
  const Index np = r.parent_adj->num_nodes;
  const Index ne = r.parent_adj->num_edges();
  if (!pooled_V.defined() || pooled_V.rows() != static_cast<Index>(r.indices.size()))
    throw DimensionError("unpool: node attrs do not match the selection size");
  if (!pooled_E.defined() || pooled_E.rows() != static_cast<Index>(r.edge_parent_ids.size()))
    throw DimensionError("unpool: edge attrs do not match the pooled edge count");

  Graph out;
  out.V = scatter_rows(pooled_V, r.indices, np);

  bool any_synth = false;
  for (Index id : r.edge_parent_ids)
    if (id < 0) any_synth = true;
  if (!any_synth) {
    out.E = scatter_rows(pooled_E, r.edge_parent_ids, ne);
  } else {
    std::vector<Index> slots, ids;
    for (std::size_t k = 0; k < r.edge_parent_ids.size(); ++k) {
      if (r.edge_parent_ids[k] < 0) continue;
      slots.push_back(static_cast<Index>(k));
      ids.push_back(r.edge_parent_ids[k]);
    }
    out.E = scatter_rows(gather_rows(pooled_E, slots), ids, ne);
  }

  out.adj = r.parent_adj;
  out.pos = r.parent_pos;
  out.member_offsets = r.member_offsets_parent;
  out.level = r.pooled.level - 1;
  return out;
}

std::vector<int> masked_field(const std::vector<TopKResult>& chain, Index n0) {
  std::vector<int> field(static_cast<std::size_t>(n0), 0);
  std::vector<Index> composed(static_cast<std::size_t>(n0));
  std::iota(composed.begin(), composed.end(), Index{0});
  for (std::size_t l = 0; l < chain.size(); ++l) {
    std::vector<Index> next;
    next.reserve(chain[l].indices.size());
    for (Index id : chain[l].indices) {
      if (id < 0 || id >= static_cast<Index>(composed.size()))
        throw UsageError("masked_field: level " + std::to_string(l + 1) +
                         " selects node " + std::to_string(id) + " outside its parent level");
      next.push_back(composed[static_cast<std::size_t>(id)]);
    }
    for (Index orig : next) field[static_cast<std::size_t>(orig)] = static_cast<int>(l) + 1;
    composed = std::move(next);
  }
  return field;
}

}  // namespace gae
