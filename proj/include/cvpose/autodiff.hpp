#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "cvpose/errors.hpp"

/// Reverse-mode differentiation over dense double matrices.
///
/// A Tape records every operation in creation order, so parents always
/// precede children. Values are cheap handles into the tape; the tape must
/// outlive them. One tape per thread.
namespace cvpose::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Value {
 public:
  Value() = default;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& data() const;
  const Matrix& grad() const;
  const char* op_tag() const;
  int node_id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  Eigen::Index rows() const { return data().rows(); }
  Eigen::Index cols() const { return data().cols(); }
  /// Value of a 1x1 node.
  double item() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Propagates node `self`'s gradient into its parents.
  using BackwardFn = std::function<void(Tape&, int self)>;

  struct Node {
    Matrix data;
    Matrix grad;
    std::vector<int> parents;
    const char* op_tag = "";
    bool requires_grad = false;
    BackwardFn backward;
  };

  /// Differentiable input (parameters, poses under test).
  Value leaf(Matrix data, const char* tag = "leaf");
  /// Input that never receives a gradient.
  Value constant(Matrix data, const char* tag = "const");
  /// Records an operation; it requires a gradient iff any parent does.
  Value record(Matrix data, std::vector<int> parents, const char* tag, BackwardFn backward);

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Throws NotScalar.
  void backward(const Value& loss);
  void zero_grad();

  /// Adds `g` to a node's gradient when that node takes part in differentiation.
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = node(id);
    if (n.requires_grad) n.grad += g;
  }
  bool wants_grad(int id) const { return node(id).requires_grad; }

 private:
  std::vector<Node> nodes_;
};

enum class Axis { All, Rows, Cols };

// Linear algebra.
Value matmul(const Value& a, const Value& b);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
/// Elementwise product.
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double c);
inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(double c, const Value& a) { return scale(a, c); }

/// max(x, 0); the subgradient at exactly 0 is 0.
Value relu(const Value& a);

/// Axis::Rows reduces each row to one entry (m x 1); Axis::Cols each column (1 x n).
Value sum(const Value& a, Axis axis = Axis::All);
Value mean(const Value& a, Axis axis = Axis::All);
/// Euclidean norm; the gradient at a zero vector is 0.
Value l2norm(const Value& a, Axis axis = Axis::All);

/// Stacks rows of `a` and `b`. With blocks > 1 both inputs are split into
/// that many equal row blocks and stacked block by block: [a_0; b_0; a_1; b_1; ...].
Value concat_rows(const Value& a, const Value& b, int blocks = 1);
/// Rows [start, start + count) of each of `blocks` equal row blocks.
Value slice_rows(const Value& a, Eigen::Index start, Eigen::Index count, int blocks = 1);

/// Applies the constant M (m x n) to each n-row block of `a`: result rows are
/// blocks * m. Equivalent to kron(I_blocks, M) * a.
Value block_left_multiply(const Matrix& M, const Value& a, int blocks);
/// Right-multiplies block b of `a` by the constant mats[b] (c x c').
Value block_right_multiply(const Value& a, const std::vector<Matrix>& mats);

/// Rows (x, y, z) -> (x / z, y / z). Throws NonPositiveDepth with the row index
/// when z <= min_depth.
Value perspective_divide(const Value& a, double min_depth = 1e-6);
/// Row-wise cosine of the angle between rows of `a` and `b` (m x 1). Rows
/// where either vector has zero length give cosine 1 with zero gradient.
Value rowwise_cosine(const Value& a, const Value& b);

/// (blocks * n) x c  ->  blocks x (n * c), each block flattened row-major.
Value flatten_blocks(const Value& a, int blocks);
/// Inverse of flatten_blocks: blocks x (n * c) -> (blocks * n) x c.
Value unflatten_blocks(const Value& a, Eigen::Index cols);

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Coordinates sampled across all parameters; every coordinate is checked
  /// when this exceeds the parameter count.
  int samples = 10;
  std::uint64_t seed = 7;
  /// Denominator floor of the relative error.
  double abs_floor = 1e-6;
  /// Coordinates whose one-sided slopes disagree by more than this (relative)
  /// sit on a kink and are skipped.
  double kink_tol = 1e-2;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped_kinks = 0;
  bool passed = false;
};

/// Builds a scalar loss on a fresh tape from leaves holding `params`.
using LossBuilder = std::function<Value(Tape&, const std::vector<Value>& params)>;

/// Compares analytic gradients with central differences (f(p+eps) - f(p-eps)) / (2 eps).
/// Failures are reported, never thrown.
GradCheckReport grad_check(const LossBuilder& f, std::vector<Matrix> params, const GradCheckOptions& opts = {});

}  // namespace cvpose::ad
