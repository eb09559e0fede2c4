#include "gae/error.hpp"
#include "gae/graph.hpp"

#include "doctest.h"
#include "helpers.hpp"

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

using namespace gae;
using test_util::max_abs_diff;
using test_util::random_mat;

namespace {

MeshInput two_cell_mesh() {
  MeshInput mesh;
  mesh.centroids = Mat(2, 2);
  mesh.centroids << 0., 0., 1., 0.;
  mesh.face_pairs = {{0, 1}};
  return mesh;
}

std::set<std::pair<Index, Index>> edge_set(const Graph& g) {
  std::set<std::pair<Index, Index>> out;
  for (std::size_t k = 0; k < g.adj->senders.size(); ++k)
    out.insert({g.adj->senders[k], g.adj->receivers[k]});
  return out;
}

}  // namespace

TEST_CASE("adjacency validation and CSR index") {
  auto adj = make_adjacency({1, 2, 0}, {0, 0, 1}, 3);
  CHECK(adj->num_edges() == 3);
  REQUIRE(adj->row_ptr.size() == 4);
  CHECK(adj->row_ptr[0] == 0);
  CHECK(adj->row_ptr[1] == 2);  // receiver 0 has two edges
  CHECK(adj->row_ptr[2] == 3);
  CHECK(adj->row_ptr[3] == 3);  // receiver 2 has none

  CHECK_THROWS_AS(make_adjacency({0}, {0}, 2), UsageError);          // self-loop
  CHECK_THROWS_AS(make_adjacency({2, 1}, {0, 0}, 3), UsageError);    // unsorted
  CHECK_THROWS_AS(make_adjacency({1, 1}, {0, 0}, 2), UsageError);    // duplicate
  CHECK_THROWS_AS(make_adjacency({5}, {0}, 3), UsageError);          // out of range
  CHECK_THROWS_AS(make_adjacency({0, 1}, {1}, 2), UsageError);       // length mismatch
}

TEST_CASE("two cells, one face pair") {
  GraphBuildOptions opts;
  opts.radius = 0.5;
  Graph g = build_input_graph(two_cell_mesh(), opts);
  CHECK(g.num_nodes() == 2);
  CHECK(g.num_edges() == 2);
  CHECK(g.level == 0);
  CHECK(g.members() == 1);
  CHECK_FALSE(g.V.defined());

  // edges sorted by (receiver, sender): 1->0 then 0->1; feature = recv - send
  CHECK(g.adj->senders == std::vector<Index>{1, 0});
  CHECK(g.adj->receivers == std::vector<Index>{0, 1});
  Mat expect(2, 2);
  expect << -1., 0., 1., 0.;
  CHECK(max_abs_diff(g.E.value(), expect) == 0.);
}

TEST_CASE("three collinear cells, radius only") {
  MeshInput mesh;
  mesh.centroids = Mat(3, 2);
  mesh.centroids << 0., 0., 1., 0., 2., 0.;
  GraphBuildOptions opts;
  opts.radius = 1.5;
  Graph g = build_input_graph(mesh, opts);

  // brute force: all ordered pairs within 1.5
  std::set<std::pair<Index, Index>> expect;
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j)
      if (i != j && (mesh.centroids.row(i) - mesh.centroids.row(j)).norm() <= 1.5)
        expect.insert({i, j});
  CHECK(expect.size() == 4);
  CHECK(edge_set(g) == expect);
}

TEST_CASE("face pairs union radius edges, deduplicated") {
  MeshInput mesh;
  mesh.centroids = Mat(4, 2);
  mesh.centroids << 0., 0., 0.05, 0., 0.5, 0., 0.5, 0.04;
  mesh.face_pairs = {{0, 2}};  // far pair only the faces provide
  GraphBuildOptions opts;
  opts.radius = 0.08;
  Graph g = build_input_graph(mesh, opts);

  std::set<std::pair<Index, Index>> expect = {{0, 1}, {1, 0}, {2, 3}, {3, 2}, {0, 2}, {2, 0}};
  CHECK(edge_set(g) == expect);

  // adding a face pair that the radius already found changes nothing
  mesh.face_pairs.push_back({1, 0});
  Graph g2 = build_input_graph(mesh, opts);
  CHECK(edge_set(g2) == expect);
  CHECK(g2.num_edges() == g.num_edges());
}

TEST_CASE("input validation") {
  MeshInput mesh = two_cell_mesh();
  mesh.centroids(1, 0) = 0.;  // duplicate of cell 0 up to 1e-12
  CHECK_THROWS_AS(build_input_graph(mesh), InputError);

  MeshInput selfpair = two_cell_mesh();
  selfpair.face_pairs = {{1, 1}};
  CHECK_THROWS_AS(build_input_graph(selfpair), InputError);

  MeshInput range = two_cell_mesh();
  range.face_pairs = {{0, 5}};
  CHECK_THROWS_AS(build_input_graph(range), InputError);

  GraphBuildOptions bad;
  bad.radius = 0.;
  CHECK_THROWS_AS(build_input_graph(two_cell_mesh(), bad), ConfigError);
}

TEST_CASE("edge cap rejects runaway radius") {
  Rng rng(21);
  MeshInput mesh;
  mesh.centroids = random_mat(rng, 60, 2, 0., 0.02);  // everything within radius
  GraphBuildOptions opts;
  opts.radius = 1.0;
  opts.cap_mean_degree = 2.0;  // cap = 2 * 60 edges, complete graph has 3540
  CHECK_THROWS_AS(build_input_graph(mesh, opts), ConfigError);
}

TEST_CASE("append_norm adds the edge length column") {
  GraphBuildOptions opts;
  opts.radius = 0.5;
  opts.append_norm = true;
  Graph g = build_input_graph(two_cell_mesh(), opts);
  REQUIRE(g.E.cols() == 3);
  CHECK(g.E.value()(0, 2) == doctest::Approx(1.).epsilon(1e-15));
  CHECK(g.E.value()(1, 2) == doctest::Approx(1.).epsilon(1e-15));
}

TEST_CASE("radius symmetry with negated features") {
  Rng rng(8);
  MeshInput mesh;
  mesh.centroids = random_mat(rng, 80, 2, 0., 1.);
  GraphBuildOptions opts;
  opts.radius = 0.2;
  Graph g = build_input_graph(mesh, opts);
  REQUIRE(g.num_edges() > 0);

  const auto edges = edge_set(g);
  const Mat& e = g.E.value();
  for (std::size_t k = 0; k < g.adj->senders.size(); ++k) {
    const Index s = g.adj->senders[k];
    const Index r = g.adj->receivers[k];
    CHECK(edges.count({r, s}) == 1);
    const Mat disp = mesh.centroids.row(r) - mesh.centroids.row(s);
    CHECK(max_abs_diff(e.row(static_cast<Index>(k)), disp) == 0.);
  }
}

TEST_CASE("spatial hash equals brute force") {
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const Index n = 150 + 100 * trial;
    MeshInput mesh;
    mesh.centroids = random_mat(rng, n, 2, -1., 1.);
    const double radius = 0.1 + 0.05 * trial;
    GraphBuildOptions opts;
    opts.radius = radius;
    opts.cap_mean_degree = 64.;
    Graph g = build_input_graph(mesh, opts);

    std::set<std::pair<Index, Index>> brute;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j &&
            (mesh.centroids.row(i) - mesh.centroids.row(j)).squaredNorm() <= radius * radius)
          brute.insert({i, j});
    CHECK(edge_set(g) == brute);
  }
}

TEST_CASE("bind_snapshot") {
  GraphBuildOptions opts;
  opts.radius = 0.5;
  Graph g = build_input_graph(two_cell_mesh(), opts);

  Graph z = bind_snapshot(g, Mat::Zero(2, 2));
  CHECK(z.V.defined());
  CHECK(z.V.value().cwiseAbs().maxCoeff() == 0.);
  CHECK(z.V.cols() == 2);

  Rng rng(2);
  Graph a = bind_snapshot(g, random_mat(rng, 2, 2));
  Graph b = bind_snapshot(g, random_mat(rng, 2, 2));
  CHECK(a.adj.get() == b.adj.get());
  CHECK(a.pos.get() == b.pos.get());
  CHECK(a.E.id() == b.E.id());
  CHECK(max_abs_diff(a.V.value(), b.V.value()) > 0.);

  CHECK_THROWS_AS(bind_snapshot(g, Mat::Zero(5, 2)), DimensionError);
}

TEST_CASE("batching") {
  Rng rng(17);
  Graph g3 = test_util::random_graph(rng, 3, 2, 0.6);
  Graph g4 = test_util::random_graph(rng, 4, 2, 0.6);

  SUBCASE("offsets and sizes") {
    BatchedGraph batch = batch_graphs({g3, g4});
    REQUIRE(batch.offsets.size() == 3);
    CHECK(batch.offsets[0] == 0);
    CHECK(batch.offsets[1] == 3);
    CHECK(batch.offsets[2] == 7);
    CHECK(batch.merged.num_nodes() == 7);
    CHECK(batch.merged.num_edges() == g3.num_edges() + g4.num_edges());
    CHECK(batch.merged.members() == 2);
    REQUIRE(batch.graph_ids.size() == 7);
    CHECK(batch.graph_ids[0] == 0);
    CHECK(batch.graph_ids[3] == 1);

    // no edge crosses a member boundary
    for (std::size_t k = 0; k < batch.merged.adj->senders.size(); ++k) {
      const bool s_first = batch.merged.adj->senders[k] < 3;
      const bool r_first = batch.merged.adj->receivers[k] < 3;
      CHECK(s_first == r_first);
    }
  }

  SUBCASE("round trip restores originals bitwise") {
    BatchedGraph batch = batch_graphs({g3, g4});
    const std::vector<Graph> back = unbatch(batch);
    REQUIRE(back.size() == 2);
    CHECK(max_abs_diff(back[0].V.value(), g3.V.value()) == 0.);
    CHECK(max_abs_diff(back[1].V.value(), g4.V.value()) == 0.);
    CHECK(max_abs_diff(back[0].E.value(), g3.E.value()) == 0.);
    CHECK(max_abs_diff(back[1].E.value(), g4.E.value()) == 0.);
    CHECK(back[0].adj->senders == g3.adj->senders);
    CHECK(back[0].adj->receivers == g3.adj->receivers);
    CHECK(back[1].adj->senders == g4.adj->senders);
    CHECK(back[1].adj->receivers == g4.adj->receivers);
    CHECK(max_abs_diff(*back[0].pos, *g3.pos) == 0.);
    CHECK(max_abs_diff(*back[1].pos, *g4.pos) == 0.);
  }

  SUBCASE("degree histogram is the concatenation of member histograms") {
    BatchedGraph batch = batch_graphs({g3, g4});
    std::vector<Index> merged_deg;
    for (Index i = 0; i < 7; ++i)
      merged_deg.push_back(batch.merged.adj->row_ptr[i + 1] - batch.merged.adj->row_ptr[i]);
    std::vector<Index> expect;
    for (const Graph* g : {&g3, &g4})
      for (Index i = 0; i < g->num_nodes(); ++i)
        expect.push_back(g->adj->row_ptr[i + 1] - g->adj->row_ptr[i]);
    CHECK(merged_deg == expect);
  }

  SUBCASE("mse over identical members equals the single-graph mse") {
    BatchedGraph batch = batch_graphs({g3, g3, g3});
    Rng r2(5);
    const Mat target = random_mat(r2, 3, 2);
    Mat stacked(9, 2);
    stacked << target, target, target;

    Tensor single = mean_all(square(sub(g3.V, Tensor::matrix(target))));
    Tensor batched = mean_all(square(sub(batch.merged.V, Tensor::matrix(stacked))));
    CHECK(single.item() == doctest::Approx(batched.item()).epsilon(1e-15));
  }

  SUBCASE("width mismatch and unbound attrs are rejected") {
    Graph g5 = test_util::random_graph(rng, 5, 3, 0.5);
    CHECK_THROWS_AS(batch_graphs({g3, g5}), DimensionError);
    Graph naked = g3;
    naked.V = Tensor();
    CHECK_THROWS_AS(batch_graphs({naked, g4}), UsageError);
    CHECK_THROWS_AS(batch_graphs({}), UsageError);
  }
}
