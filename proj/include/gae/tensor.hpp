#pragma once

#include <Eigen/Dense>

#include <memory>
#include <unordered_map>
#include <vector>

namespace gae {

/// Dense f64 matrix, row-major. All numeric state in the library lives in
/// these; Eigen is the only math dependency.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

namespace detail {
struct Node;
}

/// Reverse-mode autodiff value: a matrix plus an optional tape node.
///
/// Copies are shallow (the node is shared). Values are treated as immutable
/// once another op has consumed them; parameter leaves are the one exception
/// and are mutated only by the optimizer between forward passes.
///
/// Rank is a serialization tag (0 scalar, 1 vector, 2 matrix); vectors are
/// stored as n-by-1, scalars as 1-by-1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor matrix(Mat v, bool requires_grad = false);
  static Tensor vector(const std::vector<double>& v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const;
  int rank() const;
  std::vector<Index> shape() const;
  Index rows() const;
  Index cols() const;
  Index size() const;
  bool requires_grad() const;
  bool is_leaf() const;

  /// Scalar convenience accessor; usage error unless size() == 1.
  double item() const;

  /// Leaf gradient accumulator. Allocated (zero) at leaf creation.
  const Mat& grad() const;
  void zero_grad();
  void add_grad(const Mat& g);

  /// Overwrite a leaf's value in place (optimizer step, checkpoint load).
  /// Shape must match; usage error on non-leaf tensors.
  void set_value(const Mat& v);

  /// Stable identity of the underlying node (key for gradient sinks).
  const void* id() const;

 private:
  friend Tensor wrap_node(std::shared_ptr<detail::Node> n);
  friend detail::Node* unwrap(const Tensor& t);
  friend std::shared_ptr<detail::Node> share_node(const Tensor& t);
  std::shared_ptr<detail::Node> node_;
};

/// Gradient sink keyed by Tensor::id(); used for data-parallel gradient
/// evaluation where leaf accumulators must not be shared between workers.
using GradSink = std::unordered_map<const void*, Mat>;

// ---- forward ops ------------------------------------------------------
// Every op validates operand shapes (DimensionError) and checks the result
// for NaN/Inf (NumericError). Results require grad iff any operand does.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// x + b broadcast over rows; b is a length-cols(x) vector.
Tensor add_rowvec(const Tensor& x, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor square(const Tensor& x);
/// ELU with alpha = 1.
Tensor elu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Per-row layer normalization followed by elementwise gain and bias
/// (both length cols(x)); eps sits inside the square root.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
/// out.row(i) = x.row(idx[i]); indices may repeat.
Tensor gather_rows(const Tensor& x, const std::vector<Index>& idx);
/// Zero matrix of n_rows rows with out.row(idx[i]) = x.row(i); indices unique.
Tensor scatter_rows(const Tensor& x, const std::vector<Index>& idx, Index n_rows);
/// out.row(g) = mean of x rows with group[i] == g; empty groups stay zero.
Tensor scatter_mean(const Tensor& x, const std::vector<Index>& group, Index n_groups);
/// x with row i multiplied by s(i, 0); s is rows(x)-by-1.
Tensor row_scale(const Tensor& x, const Tensor& s);
/// [a | b]; same row counts.
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// v / ||v|| for a single-column v; numeric error when ||v|| < 1e-12.
Tensor unit_normalize(const Tensor& v);
Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);

/// Reverse pass from a scalar loss. Leaf gradients accumulate across calls
/// until explicitly zeroed; non-leaf gradients are scratch.
void backward(const Tensor& loss);

/// As above, but leaf gradients accumulate into `sink` instead of the leaf
/// accumulators, keyed by Tensor::id(). Safe to run concurrently on
/// disjoint forward graphs that share parameter leaves.
void backward(const Tensor& loss, GradSink& sink);

}  // namespace gae
