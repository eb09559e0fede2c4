#include "gae/tensor.hpp"

#include "gae/error.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace gae {
namespace detail {

struct Backprop;

using Pull = std::function<void(const Mat&, Backprop&)>;

struct Node {
  Mat value;
  Mat grad;  // leaves: persistent accumulator; non-leaves: scratch
  std::vector<std::shared_ptr<Node>> parents;
  Pull pull;
  int rank = 2;
  bool requires_grad = false;
  bool leaf = true;
};

struct Backprop {
  GradSink* sink = nullptr;

  Mat& buffer(const std::shared_ptr<Node>& n) {
    Node* p = n.get();
    if (p->leaf && sink) {
      Mat& m = (*sink)[p];
      if (m.size() == 0) m = Mat::Zero(p->value.rows(), p->value.cols());
      return m;
    }
    if (p->grad.size() == 0) p->grad = Mat::Zero(p->value.rows(), p->value.cols());
    return p->grad;
  }
};

}  // namespace detail

using detail::Backprop;
using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor wrap_node(NodePtr n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

detail::Node* unwrap(const Tensor& t) { return t.node_.get(); }

std::shared_ptr<detail::Node> share_node(const Tensor& t) { return t.node_; }

namespace {

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << "[" << m.rows() << " x " << m.cols() << "]";
  return os.str();
}

void check_finite(const Mat& m, const char* op) {
  if (!m.allFinite()) throw NumericError(std::string(op) + ": produced non-finite values");
}

Node* need(const Tensor& t, const char* op) {
  Node* n = unwrap(t);
  if (!n) throw UsageError(std::string(op) + ": undefined tensor operand");
  return n;
}

}  // namespace

// Tensor -----------------------------------------------------------------

Tensor Tensor::matrix(Mat v, bool requires_grad) {
  check_finite(v, "tensor");
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->rank = 2;
  n->requires_grad = requires_grad;
  n->leaf = true;
  if (requires_grad) n->grad = Mat::Zero(n->value.rows(), n->value.cols());
  return wrap_node(std::move(n));
}

Tensor Tensor::vector(const std::vector<double>& v, bool requires_grad) {
  Mat m(static_cast<Index>(v.size()), 1);
  for (Index i = 0; i < m.rows(); ++i) m(i, 0) = v[static_cast<std::size_t>(i)];
  Tensor t = matrix(std::move(m), requires_grad);
  t.node_->rank = 1;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Mat m(1, 1);
  m(0, 0) = v;
  Tensor t = matrix(std::move(m), requires_grad);
  t.node_->rank = 0;
  return t;
}

const Mat& Tensor::value() const { return need(*this, "value")->value; }

int Tensor::rank() const { return need(*this, "rank")->rank; }

std::vector<Index> Tensor::shape() const {
  Node* n = need(*this, "shape");
  switch (n->rank) {
    case 0: return {};
    case 1: return {n->value.rows()};
    default: return {n->value.rows(), n->value.cols()};
  }
}

Index Tensor::rows() const { return value().rows(); }
Index Tensor::cols() const { return value().cols(); }
Index Tensor::size() const { return value().size(); }

bool Tensor::requires_grad() const { return need(*this, "requires_grad")->requires_grad; }
bool Tensor::is_leaf() const { return need(*this, "is_leaf")->leaf; }

double Tensor::item() const {
  Node* n = need(*this, "item");
  if (n->value.size() != 1) throw UsageError("item: tensor is not scalar, shape " + shape_str(n->value));
  return n->value(0, 0);
}

const Mat& Tensor::grad() const {
  Node* n = need(*this, "grad");
  if (!n->leaf || !n->requires_grad) throw UsageError("grad: only differentiable leaves carry gradients");
  return n->grad;
}

void Tensor::zero_grad() {
  Node* n = need(*this, "zero_grad");
  if (!n->leaf || !n->requires_grad) throw UsageError("zero_grad: only differentiable leaves carry gradients");
  n->grad.setZero();
}

void Tensor::add_grad(const Mat& g) {
  Node* n = need(*this, "add_grad");
  if (!n->leaf || !n->requires_grad) throw UsageError("add_grad: only differentiable leaves carry gradients");
  if (g.rows() != n->value.rows() || g.cols() != n->value.cols())
    throw DimensionError("add_grad: gradient shape " + shape_str(g) + " does not match value " + shape_str(n->value));
  n->grad += g;
}

void Tensor::set_value(const Mat& v) {
  Node* n = need(*this, "set_value");
  if (!n->leaf) throw UsageError("set_value: only leaves may be assigned");
  if (v.rows() != n->value.rows() || v.cols() != n->value.cols())
    throw DimensionError("set_value: shape " + shape_str(v) + " does not match " + shape_str(n->value));
  check_finite(v, "set_value");
  n->value = v;
}

const void* Tensor::id() const { return need(*this, "id"); }

// op plumbing -------------------------------------------------------------

namespace {

NodePtr pnode(const Tensor& t) { return share_node(t); }

Tensor make_op(const char* op, Mat value, int rank, std::vector<NodePtr> parents, detail::Pull pull) {
  check_finite(value, op);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->rank = rank;
  if (rg) {
    n->requires_grad = true;
    n->leaf = false;
    n->parents = std::move(parents);
    n->pull = std::move(pull);
  }
  return wrap_node(std::move(n));
}

}  // namespace

// ops ----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Node* na = need(a, "matmul");
  Node* nb = need(b, "matmul");
  if (na->value.cols() != nb->value.rows())
    throw DimensionError("matmul: inner extents differ, " + shape_str(na->value) + " * " + shape_str(nb->value));
  Mat out = na->value * nb->value;
  NodePtr pa = pnode(a), pb = pnode(b);
  return make_op("matmul", std::move(out), 2, {pa, pb}, [pa, pb](const Mat& g, Backprop& bp) {
    if (pa->requires_grad) bp.buffer(pa).noalias() += g * pb->value.transpose();
    if (pb->requires_grad) bp.buffer(pb).noalias() += pa->value.transpose() * g;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Node* na = need(a, "add");
  Node* nb = need(b, "add");
  if (na->value.rows() != nb->value.rows() || na->value.cols() != nb->value.cols())
    throw DimensionError("add: shapes differ, " + shape_str(na->value) + " + " + shape_str(nb->value));
  Mat out = na->value + nb->value;
  NodePtr pa = pnode(a), pb = pnode(b);
  return make_op("add", std::move(out), na->rank, {pa, pb}, [pa, pb](const Mat& g, Backprop& bp) {
    if (pa->requires_grad) bp.buffer(pa) += g;
    if (pb->requires_grad) bp.buffer(pb) += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Node* na = need(a, "sub");
  Node* nb = need(b, "sub");
  if (na->value.rows() != nb->value.rows() || na->value.cols() != nb->value.cols())
    throw DimensionError("sub: shapes differ, " + shape_str(na->value) + " - " + shape_str(nb->value));
  Mat out = na->value - nb->value;
  NodePtr pa = pnode(a), pb = pnode(b);
  return make_op("sub", std::move(out), na->rank, {pa, pb}, [pa, pb](const Mat& g, Backprop& bp) {
    if (pa->requires_grad) bp.buffer(pa) += g;
    if (pb->requires_grad) bp.buffer(pb) -= g;
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  Node* nx = need(x, "add_rowvec");
  Node* nb = need(b, "add_rowvec");
  if (nb->value.cols() != 1 || nb->value.rows() != nx->value.cols())
    throw DimensionError("add_rowvec: bias " + shape_str(nb->value) + " does not broadcast over " + shape_str(nx->value));
  Mat out = nx->value;
  out.rowwise() += nb->value.col(0).transpose();
  NodePtr px = pnode(x), pb = pnode(b);
  return make_op("add_rowvec", std::move(out), 2, {px, pb}, [px, pb](const Mat& g, Backprop& bp) {
    if (px->requires_grad) bp.buffer(px) += g;
    if (pb->requires_grad) bp.buffer(pb) += g.colwise().sum().transpose();
  });
}

Tensor scale(const Tensor& x, double c) {
  if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
  Node* nx = need(x, "scale");
  Mat out = nx->value * c;
  NodePtr px = pnode(x);
  return make_op("scale", std::move(out), nx->rank, {px}, [px, c](const Mat& g, Backprop& bp) {
    if (px->requires_grad) bp.buffer(px) += g * c;
  });
}

Tensor square(const Tensor& x) {
  Node* nx = need(x, "square");
  Mat out = nx->value.array().square().matrix();
  NodePtr px = pnode(x);
  return make_op("square", std::move(out), nx->rank, {px}, [px](const Mat& g, Backprop& bp) {
    if (px->requires_grad) bp.buffer(px).array() += 2.0 * g.array() * px->value.array();
  });
}

Tensor elu(const Tensor& x) {
  Node* nx = need(x, "elu");
  Mat out = nx->value.unaryExpr([](double t) { return t > 0.0 ? t : std::expm1(t); });
  NodePtr px = pnode(x);
  return make_op("elu", std::move(out), nx->rank, {px}, [px](const Mat& g, Backprop& bp) {
    if (!px->requires_grad) return;
    bp.buffer(px).array() +=
        g.array() * px->value.unaryExpr([](double t) { return t > 0.0 ? 1.0 : std::exp(t); }).array();
  });
}

Tensor sigmoid(const Tensor& x) {
  Node* nx = need(x, "sigmoid");
  auto sig = [](double t) { return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); };
  Mat out = nx->value.unaryExpr(sig);
  NodePtr px = pnode(x);
  return make_op("sigmoid", std::move(out), nx->rank, {px}, [px, sig](const Mat& g, Backprop& bp) {
    if (!px->requires_grad) return;
    Mat s = px->value.unaryExpr(sig);
    bp.buffer(px).array() += g.array() * s.array() * (1.0 - s.array());
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  Node* nx = need(x, "layer_norm");
  Node* ng = need(gain, "layer_norm");
  Node* nb = need(bias, "layer_norm");
  const Index d = nx->value.cols();
  if (d == 0) throw DimensionError("layer_norm: zero-width input");
  if (eps < 0.0 || !std::isfinite(eps)) throw ConfigError("layer_norm: eps must be finite and >= 0");
  if (ng->value.cols() != 1 || ng->value.rows() != d)
    throw DimensionError("layer_norm: gain " + shape_str(ng->value) + " does not match width " + std::to_string(d));
  if (nb->value.cols() != 1 || nb->value.rows() != d)
    throw DimensionError("layer_norm: bias " + shape_str(nb->value) + " does not match width " + std::to_string(d));

  auto normalize = [eps, d](const Mat& v, Mat& xhat, Eigen::ArrayXd& s) {
    Eigen::ArrayXd mu = v.rowwise().mean().array();
    xhat = (v.array().colwise() - mu).matrix();
    Eigen::ArrayXd var = xhat.array().square().rowwise().sum() / static_cast<double>(d);
    s = (var + eps).sqrt();
    xhat.array().colwise() /= s;
  };

  Mat xhat;
  Eigen::ArrayXd s;
  normalize(nx->value, xhat, s);
  Mat out = (xhat.array().rowwise() * ng->value.col(0).transpose().array()).matrix();
  out.array().rowwise() += nb->value.col(0).transpose().array();

  NodePtr px = pnode(x), pg = pnode(gain), pb = pnode(bias);
  return make_op("layer_norm", std::move(out), 2, {px, pg, pb},
                 [px, pg, pb, normalize, d](const Mat& g, Backprop& bp) {
                   Mat xhat;
                   Eigen::ArrayXd s;
                   normalize(px->value, xhat, s);
                   if (pg->requires_grad)
                     bp.buffer(pg) += g.cwiseProduct(xhat).colwise().sum().transpose();
                   if (pb->requires_grad) bp.buffer(pb) += g.colwise().sum().transpose();
                   if (!px->requires_grad) return;
                   Mat dxhat = (g.array().rowwise() * pg->value.col(0).transpose().array()).matrix();
                   Eigen::ArrayXd m1 = dxhat.rowwise().mean().array();
                   Eigen::ArrayXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum().array() / static_cast<double>(d);
                   Mat dx = (((dxhat.array().colwise() - m1) - (xhat.array().colwise() * m2)).colwise() / s).matrix();
                   bp.buffer(px) += dx;
                 });
}

Tensor gather_rows(const Tensor& x, const std::vector<Index>& idx) {
  Node* nx = need(x, "gather_rows");
  const Index n = nx->value.rows();
  for (Index i : idx)
    if (i < 0 || i >= n) throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range [0, " + std::to_string(n) + ")");
  Mat out(static_cast<Index>(idx.size()), nx->value.cols());
  for (Index k = 0; k < out.rows(); ++k) out.row(k) = nx->value.row(idx[static_cast<std::size_t>(k)]);
  NodePtr px = pnode(x);
  return make_op("gather_rows", std::move(out), 2, {px}, [px, idx](const Mat& g, Backprop& bp) {
    if (!px->requires_grad) return;
    Mat& buf = bp.buffer(px);
    for (Index k = 0; k < g.rows(); ++k) buf.row(idx[static_cast<std::size_t>(k)]) += g.row(k);
  });
}

Tensor scatter_rows(const Tensor& x, const std::vector<Index>& idx, Index n_rows) {
  Node* nx = need(x, "scatter_rows");
  if (static_cast<Index>(idx.size()) != nx->value.rows())
    throw DimensionError("scatter_rows: " + std::to_string(idx.size()) + " indices for " + std::to_string(nx->value.rows()) + " rows");
  std::vector<char> hit(static_cast<std::size_t>(n_rows), 0);
  for (Index i : idx) {
    if (i < 0 || i >= n_rows) throw DimensionError("scatter_rows: index " + std::to_string(i) + " out of range [0, " + std::to_string(n_rows) + ")");
    if (hit[static_cast<std::size_t>(i)]) throw UsageError("scatter_rows: duplicate index " + std::to_string(i));
    hit[static_cast<std::size_t>(i)] = 1;
  }
  Mat out = Mat::Zero(n_rows, nx->value.cols());
  for (Index k = 0; k < nx->value.rows(); ++k) out.row(idx[static_cast<std::size_t>(k)]) = nx->value.row(k);
  NodePtr px = pnode(x);
  return make_op("scatter_rows", std::move(out), 2, {px}, [px, idx](const Mat& g, Backprop& bp) {
    if (!px->requires_grad) return;
    Mat& buf = bp.buffer(px);
    for (Index k = 0; k < buf.rows(); ++k) buf.row(k) += g.row(idx[static_cast<std::size_t>(k)]);
  });
}

Tensor scatter_mean(const Tensor& x, const std::vector<Index>& group, Index n_groups) {
  Node* nx = need(x, "scatter_mean");
  if (static_cast<Index>(group.size()) != nx->value.rows())
    throw DimensionError("scatter_mean: " + std::to_string(group.size()) + " group ids for " + std::to_string(nx->value.rows()) + " rows");
  std::vector<double> cnt(static_cast<std::size_t>(n_groups), 0.0);
  for (Index gid : group) {
    if (gid < 0 || gid >= n_groups)
      throw DimensionError("scatter_mean: group " + std::to_string(gid) + " out of range [0, " + std::to_string(n_groups) + ")");
    cnt[static_cast<std::size_t>(gid)] += 1.0;
  }
  Mat out = Mat::Zero(n_groups, nx->value.cols());
  for (Index k = 0; k < nx->value.rows(); ++k) out.row(group[static_cast<std::size_t>(k)]) += nx->value.row(k);
  for (Index r = 0; r < n_groups; ++r)
    if (cnt[static_cast<std::size_t>(r)] > 0.0) out.row(r) /= cnt[static_cast<std::size_t>(r)];
  NodePtr px = pnode(x);
  return make_op("scatter_mean", std::move(out), 2, {px}, [px, group, cnt](const Mat& g, Backprop& bp) {
    if (!px->requires_grad) return;
    Mat& buf = bp.buffer(px);
    for (Index k = 0; k < buf.rows(); ++k) {
      const std::size_t gid = static_cast<std::size_t>(group[static_cast<std::size_t>(k)]);
      buf.row(k) += g.row(static_cast<Index>(gid)) / cnt[gid];
    }
  });
}

Tensor row_scale(const Tensor& x, const Tensor& s) {
  Node* nx = need(x, "row_scale");
  Node* ns = need(s, "row_scale");
  if (ns->value.cols() != 1 || ns->value.rows() != nx->value.rows())
    throw DimensionError("row_scale: scale " + shape_str(ns->value) + " does not match " + shape_str(nx->value));
  Mat out = (nx->value.array().colwise() * ns->value.col(0).array()).matrix();
  NodePtr px = pnode(x), ps = pnode(s);
  return make_op("row_scale", std::move(out), 2, {px, ps}, [px, ps](const Mat& g, Backprop& bp) {
    if (px->requires_grad) bp.buffer(px).array() += g.array().colwise() * ps->value.col(0).array();
    if (ps->requires_grad) bp.buffer(ps) += g.cwiseProduct(px->value).rowwise().sum();
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  Node* na = need(a, "concat_cols");
  Node* nb = need(b, "concat_cols");
  if (na->value.rows() != nb->value.rows())
    throw DimensionError("concat_cols: " + shape_str(na->value) + " and " + shape_str(nb->value) +
                         " differ in row count");
  Mat out(na->value.rows(), na->value.cols() + nb->value.cols());
  out.leftCols(na->value.cols()) = na->value;
  out.rightCols(nb->value.cols()) = nb->value;
  NodePtr pa = pnode(a), pb = pnode(b);
  const Index ca = na->value.cols(), cb = nb->value.cols();
  return make_op("concat_cols", std::move(out), 2, {pa, pb}, [pa, pb, ca, cb](const Mat& g, Backprop& bp) {
    if (pa->requires_grad) bp.buffer(pa) += g.leftCols(ca);
    if (pb->requires_grad) bp.buffer(pb) += g.rightCols(cb);
  });
}

Tensor unit_normalize(const Tensor& v) {
  Node* nv = need(v, "unit_normalize");
  if (nv->value.cols() != 1) throw DimensionError("unit_normalize: expected a column vector, got " + shape_str(nv->value));
  const double norm = nv->value.norm();
  if (norm < 1e-12) throw NumericError("unit_normalize: vector norm below 1e-12");
  Mat out = nv->value / norm;
  NodePtr pv = pnode(v);
  Mat unit = out;
  return make_op("unit_normalize", std::move(out), nv->rank, {pv}, [pv, unit, norm](const Mat& g, Backprop& bp) {
    if (!pv->requires_grad) return;
    const double proj = unit.col(0).dot(g.col(0));
    bp.buffer(pv) += (g - unit * proj) / norm;
  });
}

Tensor mean_all(const Tensor& x) {
  Node* nx = need(x, "mean_all");
  if (nx->value.size() == 0) throw DimensionError("mean_all: empty tensor");
  Mat out(1, 1);
  out(0, 0) = nx->value.mean();
  const double inv = 1.0 / static_cast<double>(nx->value.size());
  NodePtr px = pnode(x);
  return make_op("mean_all", std::move(out), 0, {px}, [px, inv](const Mat& g, Backprop& bp) {
    if (px->requires_grad) bp.buffer(px).array() += g(0, 0) * inv;
  });
}

Tensor sum_all(const Tensor& x) {
  Node* nx = need(x, "sum_all");
  Mat out(1, 1);
  out(0, 0) = nx->value.sum();
  NodePtr px = pnode(x);
  return make_op("sum_all", std::move(out), 0, {px}, [px](const Mat& g, Backprop& bp) {
    if (px->requires_grad) bp.buffer(px).array() += g(0, 0);
  });
}

// backward ------------------------------------------------------------------

namespace {

void backward_impl(const Tensor& loss, GradSink* sink) {
  Node* root = need(loss, "backward");
  if (root->value.size() != 1) throw UsageError("backward: loss must be scalar, got " + shape_str(root->value));
  if (!root->requires_grad) throw UsageError("backward: loss does not depend on any differentiable leaf");

  // Reverse topological order over the requires-grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  Backprop bp{sink};
  // Drop any stale scratch (a previous backward that threw mid-walk).
  for (Node* n : order)
    if (!n->leaf) n->grad.resize(0, 0);

  // Seed d(loss)/d(loss) = 1.
  if (root->leaf) {
    if (sink) {
      Mat& m = (*sink)[root];
      if (m.size() == 0) m = Mat::Zero(1, 1);
      m(0, 0) += 1.0;
    } else {
      root->grad(0, 0) += 1.0;
    }
    return;
  }
  root->grad = Mat::Ones(1, 1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->pull) continue;
    if (n->grad.size() == 0) continue;  // no contribution reached this node
    n->pull(n->grad, bp);
    n->grad.resize(0, 0);
  }
}

}  // namespace

void backward(const Tensor& loss) { backward_impl(loss, nullptr); }
void backward(const Tensor& loss, GradSink& sink) { backward_impl(loss, &sink); }

}  // namespace gae
