#pragma once

#include "gae/graph.hpp"
#include "gae/mp.hpp"
#include "gae/rng.hpp"
#include "gae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace test_util {

using gae::Index;
using gae::Mat;

inline Mat random_mat(gae::Rng& rng, Index r, Index c, double lo = -1., double hi = 1.) {
  Mat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

/// Central finite difference of a scalar function at x.
inline Mat fd_grad(const std::function<double(const Mat&)>& f, Mat x, double h = 1e-6) {
  Mat g(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) {
      const double keep = x(i, j);
      x(i, j) = keep + h;
      const double up = f(x);
      x(i, j) = keep - h;
      const double down = f(x);
      x(i, j) = keep;
      g(i, j) = (up - down) / (2. * h);
    }
  return g;
}

/// max_ij |a - b| / max(1, |b|)
inline double max_rel_err(const Mat& a, const Mat& b) {
  double worst = 0.;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(1., std::abs(b(i, j))));
  return worst;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e300;
  if (a.size() == 0) return 0.;
  return (a - b).cwiseAbs().maxCoeff();
}

/// Random directed graph: n nodes at uniform positions, each ordered pair an
/// edge with probability p (at least one edge), random V (n x f) and E.
inline gae::Graph random_graph(gae::Rng& rng, Index n, Index f, double p,
                               bool grad_attrs = false) {
  std::vector<Index> senders, receivers;
  for (Index r = 0; r < n; ++r)
    for (Index s = 0; s < n; ++s)
      if (s != r && rng.uniform() < p) {
        receivers.push_back(r);
        senders.push_back(s);
      }
  if (senders.empty()) {
    receivers.push_back(1 % n);
    senders.push_back(0);
  }
  gae::Graph g;
  g.adj = gae::make_adjacency(std::move(senders), std::move(receivers), n);
  g.pos = std::make_shared<const Mat>(random_mat(rng, n, 2, 0., 1.));
  g.member_offsets = {0, n};
  g.V = gae::Tensor::matrix(random_mat(rng, n, f), grad_attrs);
  g.E = gae::Tensor::matrix(random_mat(rng, g.adj->num_edges(), f), grad_attrs);
  return g;
}

/// Layer normalization exactly as the library defines it (population variance,
/// eps inside the square root), written as plain loops.
inline Mat loop_layer_norm(const Mat& x, const Mat& gain, const Mat& bias, double eps) {
  Mat out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    double mean = 0.;
    for (Index j = 0; j < x.cols(); ++j) mean += x(i, j);
    mean /= static_cast<double>(x.cols());
    double var = 0.;
    for (Index j = 0; j < x.cols(); ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(x.cols());
    const double inv = 1. / std::sqrt(var + eps);
    for (Index j = 0; j < x.cols(); ++j)
      out(i, j) = gain(j, 0) * (x(i, j) - mean) * inv + bias(j, 0);
  }
  return out;
}

inline double loop_elu(double v) { return v > 0. ? v : std::expm1(v); }

/// Two-layer updater as plain loops: affine, ELU, affine, layer norm.
inline Mat loop_updater(const Mat& in, const Mat& w1, const Mat& b1, const Mat& w2, const Mat& b2,
                        const Mat& gain, const Mat& bias) {
  Mat h = in * w1;
  h.rowwise() += b1.col(0).transpose();
  for (Index i = 0; i < h.rows(); ++i)
    for (Index j = 0; j < h.cols(); ++j) h(i, j) = loop_elu(h(i, j));
  h = h * w2;
  h.rowwise() += b2.col(0).transpose();
  return loop_layer_norm(h, gain, bias, gae::kLayerNormEps);
}

/// One message-passing layer written densely: per edge the two-layer MLP of
/// the concatenated (edge | sender | receiver) row, a mean of updated edges
/// per receiver (zero when a node receives nothing), then the node MLP over
/// (node | aggregate).
inline std::pair<Mat, Mat> loop_mp_layer(const gae::Graph& g, const gae::MpLayerParams& p) {
  const Mat& V = g.V.value();
  const Mat& E = g.E.value();
  const Index n = g.num_nodes();
  const Index ne = g.num_edges();
  const Index f = V.cols();

  Mat w1e(3 * f, f);
  w1e << p.we_e.value(), p.we_s.value(), p.we_r.value();
  Mat ein(ne, 3 * f);
  for (Index k = 0; k < ne; ++k)
    ein.row(k) << E.row(k), V.row(g.adj->senders[static_cast<std::size_t>(k)]),
        V.row(g.adj->receivers[static_cast<std::size_t>(k)]);
  const Mat e2 = loop_updater(ein, w1e, p.be1.value(), p.we2.value(), p.be2.value(),
                              p.ln_e_g.value(), p.ln_e_b.value());

  Mat agg = Mat::Zero(n, f);
  std::vector<double> deg(static_cast<std::size_t>(n), 0.);
  for (Index k = 0; k < ne; ++k) {
    agg.row(g.adj->receivers[static_cast<std::size_t>(k)]) += e2.row(k);
    deg[static_cast<std::size_t>(g.adj->receivers[static_cast<std::size_t>(k)])] += 1.;
  }
  for (Index i = 0; i < n; ++i)
    if (deg[static_cast<std::size_t>(i)] > 0.) agg.row(i) /= deg[static_cast<std::size_t>(i)];

  Mat w1v(2 * f, f);
  w1v << p.wv_v.value(), p.wv_a.value();
  Mat vin(n, 2 * f);
  vin << V, agg;
  const Mat v2 = loop_updater(vin, w1v, p.bv1.value(), p.wv2.value(), p.bv2.value(),
                              p.ln_v_g.value(), p.ln_v_b.value());
  return {v2, e2};
}

}  // namespace test_util
