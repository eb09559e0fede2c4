#include "gae/coarsen.hpp"

#include "gae/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <tuple>

namespace gae {

CoarseMap voxel_cluster(const Graph& fine, double lengthscale, const std::optional<Mat>& bbox) {
  if (!(lengthscale > 0.) || !std::isfinite(lengthscale))
    throw ConfigError("coarsening lengthscale must be positive and finite");
  if (!fine.pos) throw UsageError("voxel_cluster needs node positions");
  if (bbox && (bbox->rows() != 2 || bbox->cols() != 2))
    throw UsageError("voxel bounding box must be a 2 x 2 (min; max) matrix");

  const Mat& pos = *fine.pos;
  const Index n = fine.num_nodes();
  const Index members = fine.members();

  // Voxel key per node. Anchoring at the bbox minimum makes the grid
  // half-open: floor((x - min)/lengthscale). A degenerate extent in an axis
  // simply leaves every node in bin 0 along it.
  struct Key {
    Index member;
    std::int64_t ix, iy;
    bool operator<(const Key& o) const {
      return std::tie(member, ix, iy) < std::tie(o.member, o.ix, o.iy);
    }
    bool operator==(const Key& o) const {
      return member == o.member && ix == o.ix && iy == o.iy;
    }
  };

  std::vector<double> min_x(static_cast<std::size_t>(members));
  std::vector<double> min_y(static_cast<std::size_t>(members));
  for (Index m = 0; m < members; ++m) {
    const Index lo = fine.member_offsets[static_cast<std::size_t>(m)];
    const Index hi = fine.member_offsets[static_cast<std::size_t>(m) + 1];
    if (hi <= lo) throw UsageError("voxel_cluster: empty batch member");
    if (bbox) {
      min_x[static_cast<std::size_t>(m)] = (*bbox)(0, 0);
      min_y[static_cast<std::size_t>(m)] = (*bbox)(0, 1);
    } else {
      min_x[static_cast<std::size_t>(m)] = pos.col(0).segment(lo, hi - lo).minCoeff();
      min_y[static_cast<std::size_t>(m)] = pos.col(1).segment(lo, hi - lo).minCoeff();
    }
  }

  std::vector<Key> keys(static_cast<std::size_t>(n));
  {
    Index m = 0;
    for (Index i = 0; i < n; ++i) {
      while (i >= fine.member_offsets[static_cast<std::size_t>(m) + 1]) ++m;
      keys[static_cast<std::size_t>(i)] = {
          m,
          static_cast<std::int64_t>(std::floor((pos(i, 0) - min_x[static_cast<std::size_t>(m)]) / lengthscale)),
          static_cast<std::int64_t>(std::floor((pos(i, 1) - min_y[static_cast<std::size_t>(m)]) / lengthscale))};
    }
  }

  // Occupied voxels in (member, ix, iy) order become the parents.
  std::vector<Key> occupied = keys;
  std::sort(occupied.begin(), occupied.end());
  occupied.erase(std::unique(occupied.begin(), occupied.end()), occupied.end());
  const Index nc = static_cast<Index>(occupied.size());

  CoarseMap map;
  map.lengthscale = lengthscale;
  map.parent_of.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto it = std::lower_bound(occupied.begin(), occupied.end(), keys[static_cast<std::size_t>(i)]);
    map.parent_of[static_cast<std::size_t>(i)] = static_cast<Index>(it - occupied.begin());
  }

  auto ppos = std::make_shared<Mat>(nc, 2);
  map.member_offsets.assign(static_cast<std::size_t>(members) + 1, 0);
  for (Index c = 0; c < nc; ++c) {
    const Key& k = occupied[static_cast<std::size_t>(c)];
    (*ppos)(c, 0) = min_x[static_cast<std::size_t>(k.member)] +
                    (static_cast<double>(k.ix) + 0.5) * lengthscale;
    (*ppos)(c, 1) = min_y[static_cast<std::size_t>(k.member)] +
                    (static_cast<double>(k.iy) + 0.5) * lengthscale;
    ++map.member_offsets[static_cast<std::size_t>(k.member) + 1];
  }
  for (std::size_t m = 1; m < map.member_offsets.size(); ++m)
    map.member_offsets[m] += map.member_offsets[m - 1];
  map.parent_pos = std::move(ppos);

  // Coarse edges: (receiver, sender) pairs crossed by any fine edge.
  const std::size_t ne = fine.adj->senders.size();
  std::vector<std::pair<Index, Index>> crossing;  // (coarse recv, coarse send)
  crossing.reserve(ne);
  for (std::size_t k = 0; k < ne; ++k) {
    const Index ps = map.parent_of[static_cast<std::size_t>(fine.adj->senders[k])];
    const Index pr = map.parent_of[static_cast<std::size_t>(fine.adj->receivers[k])];
    if (ps != pr) crossing.emplace_back(pr, ps);
  }
  std::vector<std::pair<Index, Index>> unique_edges = crossing;
  std::sort(unique_edges.begin(), unique_edges.end());
  unique_edges.erase(std::unique(unique_edges.begin(), unique_edges.end()), unique_edges.end());

  std::vector<Index> cs(unique_edges.size()), cr(unique_edges.size());
  for (std::size_t k = 0; k < unique_edges.size(); ++k) {
    cr[k] = unique_edges[k].first;
    cs[k] = unique_edges[k].second;
  }
  map.coarse_adj = make_adjacency(std::move(cs), std::move(cr), nc);

  map.fine_to_coarse_edge.assign(ne, -1);
  for (std::size_t k = 0; k < ne; ++k) {
    const Index ps = map.parent_of[static_cast<std::size_t>(fine.adj->senders[k])];
    const Index pr = map.parent_of[static_cast<std::size_t>(fine.adj->receivers[k])];
    if (ps == pr) continue;
    const auto it = std::lower_bound(unique_edges.begin(), unique_edges.end(), std::make_pair(pr, ps));
    map.fine_to_coarse_edge[k] = static_cast<Index>(it - unique_edges.begin());
  }

  Mat disp(n, 2);
  for (Index i = 0; i < n; ++i)
    disp.row(i) = pos.row(i) - map.parent_pos->row(map.parent_of[static_cast<std::size_t>(i)]);
  map.disp = Tensor::matrix(disp, false);
  map.neg_disp = Tensor::matrix(-disp, false);
  return map;
}

Tensor coarse_edge_attrs(const Tensor& fine_E, const CoarseMap& map) {
  if (!fine_E.defined() || fine_E.rows() != static_cast<Index>(map.fine_to_coarse_edge.size()))
    throw DimensionError("coarse_edge_attrs: fine edge attrs do not match the map");
  std::vector<Index> rows, targets;
  rows.reserve(map.fine_to_coarse_edge.size());
  targets.reserve(map.fine_to_coarse_edge.size());
  for (std::size_t k = 0; k < map.fine_to_coarse_edge.size(); ++k) {
    if (map.fine_to_coarse_edge[k] < 0) continue;
    rows.push_back(static_cast<Index>(k));
    targets.push_back(map.fine_to_coarse_edge[k]);
  }
  const Index nce = map.coarse_adj->num_edges();
  if (nce == 0) return Tensor::matrix(Mat::Zero(0, fine_E.cols()), false);
  return scatter_mean(gather_rows(fine_E, rows), targets, nce);
}

Tensor transfer_fine_to_coarse(const Mlp& mlp, const Tensor& fine_attrs, const CoarseMap& map) {
  if (!fine_attrs.defined() || fine_attrs.rows() != static_cast<Index>(map.parent_of.size()))
    throw DimensionError("transfer_fine_to_coarse: attrs do not match the map's fine node count");
  Tensor h = mlp_apply(mlp, concat_cols(fine_attrs, map.disp));
  return scatter_mean(h, map.parent_of, map.num_coarse());
}

Tensor transfer_coarse_to_fine(const Mlp& mlp, const Tensor& coarse_attrs,
                               const Tensor& fine_skip, const CoarseMap& map) {
  if (!coarse_attrs.defined() || coarse_attrs.rows() != map.num_coarse())
    throw DimensionError("transfer_coarse_to_fine: attrs do not match the map's coarse node count");
  if (!fine_skip.defined() || fine_skip.rows() != static_cast<Index>(map.parent_of.size()))
    throw DimensionError("transfer_coarse_to_fine: skip does not match the map's fine node count");
  Tensor up = gather_rows(coarse_attrs, map.parent_of);
  return add(mlp_apply(mlp, concat_cols(up, map.neg_disp)), fine_skip);
}

Graph coarse_graph(const Graph& fine, const CoarseMap& map, const Mlp& f2c) {
  Graph g;
  g.V = transfer_fine_to_coarse(f2c, fine.V, map);
  g.E = coarse_edge_attrs(fine.E, map);
  g.adj = map.coarse_adj;
  g.pos = map.parent_pos;
  g.member_offsets = map.member_offsets;
  g.level = fine.level;  // pooling level, unchanged by coarsening
  return g;
}

std::shared_ptr<const CoarseMap> CoarsenCache::get(const Graph& g, double lengthscale) {
  if (g.level != 0)
    return std::make_shared<const CoarseMap>(voxel_cluster(g, lengthscale));

  std::uint64_t ls_bits = 0;
  static_assert(sizeof ls_bits == sizeof lengthscale);
  std::memcpy(&ls_bits, &lengthscale, sizeof ls_bits);
  const std::pair<const void*, std::uint64_t> key{g.adj.get(), ls_bits};

  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = entries_.find(key);
    if (it != entries_.end()) return it->second.map;
  }
  auto built = std::make_shared<const CoarseMap>(voxel_cluster(g, lengthscale));
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = entries_.emplace(key, Entry{g.adj, built});
  return it->second.map;
}

}  // namespace gae
