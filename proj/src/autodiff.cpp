#include "cvpose/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace cvpose::ad {

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch(std::string(op) + ": shapes " + shape(a.data()) + " and " + shape(b.data()) + " differ");
  }
}

void require_same_tape(const Value& a, const Value& b) {
  if (a.tape() != b.tape()) throw InvalidArgument("operands live on different tapes");
}

using MapMatrix = Eigen::Map<Matrix>;
using ConstMapMatrix = Eigen::Map<const Matrix>;

}  // namespace

const Matrix& Value::data() const { return tape_->node(id_).data; }
const Matrix& Value::grad() const { return tape_->node(id_).grad; }
const char* Value::op_tag() const { return tape_->node(id_).op_tag; }

double Value::item() const {
  if (rows() != 1 || cols() != 1) throw NotScalar("item() on a " + shape(data()) + " value");
  return data()(0, 0);
}

Value Tape::leaf(Matrix data, const char* tag) {
  Node n;
  n.grad = Matrix::Zero(data.rows(), data.cols());
  n.data = std::move(data);
  n.op_tag = tag;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Value Tape::constant(Matrix data, const char* tag) {
  Node n;
  n.grad = Matrix::Zero(data.rows(), data.cols());
  n.data = std::move(data);
  n.op_tag = tag;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Value Tape::record(Matrix data, std::vector<int> parents, const char* tag, BackwardFn backward) {
  Node n;
  n.requires_grad = std::any_of(parents.begin(), parents.end(), [&](int p) { return node(p).requires_grad; });
  n.grad = Matrix::Zero(data.rows(), data.cols());
  n.data = std::move(data);
  n.parents = std::move(parents);
  n.op_tag = tag;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::backward(const Value& loss) {
  if (loss.tape() != this) throw InvalidArgument("backward: loss lives on another tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw NotScalar("backward: loss is " + shape(loss.data()));
  node(loss.node_id()).grad(0, 0) += 1.0;
  for (int id = loss.node_id(); id >= 0; --id) {
    const Node& n = node(id);
    if (n.requires_grad && n.backward) n.backward(*this, id);
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.setZero();
}

Value matmul(const Value& a, const Value& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("matmul: inner dimensions of " + shape(a.data()) + " and " + shape(b.data()) + " differ");
  }
  Matrix out(a.rows(), b.cols());
  out.noalias() = a.data() * b.data();
  const int ia = a.node_id();
  const int ib = b.node_id();
  return a.tape()->record(std::move(out), {ia, ib}, "matmul", [ia, ib](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    if (t.wants_grad(ia)) t.node(ia).grad.noalias() += g * t.node(ib).data.transpose();
    if (t.wants_grad(ib)) t.node(ib).grad.noalias() += t.node(ia).data.transpose() * g;
  });
}

Value add(const Value& a, const Value& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  const int ia = a.node_id();
  const int ib = b.node_id();
  return a.tape()->record(a.data() + b.data(), {ia, ib}, "add", [ia, ib](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Value sub(const Value& a, const Value& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  const int ia = a.node_id();
  const int ib = b.node_id();
  return a.tape()->record(a.data() - b.data(), {ia, ib}, "sub", [ia, ib](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Value mul(const Value& a, const Value& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  const int ia = a.node_id();
  const int ib = b.node_id();
  return a.tape()->record(a.data().cwiseProduct(b.data()), {ia, ib}, "mul", [ia, ib](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    t.accumulate(ia, g.cwiseProduct(t.node(ib).data));
    t.accumulate(ib, g.cwiseProduct(t.node(ia).data));
  });
}

Value scale(const Value& a, double c) {
  const int ia = a.node_id();
  return a.tape()->record(c * a.data(), {ia}, "scale",
                          [ia, c](Tape& t, int self) { t.accumulate(ia, c * t.node(self).grad); });
}

Value relu(const Value& a) {
  const int ia = a.node_id();
  return a.tape()->record(a.data().cwiseMax(0.0), {ia}, "relu", [ia](Tape& t, int self) {
    const Matrix& x = t.node(ia).data;
    const Matrix& g = t.node(self).grad;
    t.accumulate(ia, (x.array() > 0.0).select(g, 0.0));
  });
}

Value sum(const Value& a, Axis axis) {
  const int ia = a.node_id();
  switch (axis) {
    case Axis::All:
      return a.tape()->record(Matrix::Constant(1, 1, a.data().sum()), {ia}, "sum", [ia](Tape& t, int self) {
        const double g = t.node(self).grad(0, 0);
        t.accumulate(ia, Matrix::Constant(t.node(ia).data.rows(), t.node(ia).data.cols(), g));
      });
    case Axis::Rows:
      return a.tape()->record(a.data().rowwise().sum(), {ia}, "sum_rows", [ia](Tape& t, int self) {
        const Matrix& g = t.node(self).grad;
        t.accumulate(ia, g.replicate(1, t.node(ia).data.cols()));
      });
    case Axis::Cols:
      return a.tape()->record(a.data().colwise().sum(), {ia}, "sum_cols", [ia](Tape& t, int self) {
        const Matrix& g = t.node(self).grad;
        t.accumulate(ia, g.replicate(t.node(ia).data.rows(), 1));
      });
  }
  throw InvalidArgument("sum: bad axis");
}

Value mean(const Value& a, Axis axis) {
  const double n = axis == Axis::All    ? static_cast<double>(a.data().size())
                   : axis == Axis::Rows ? static_cast<double>(a.cols())
                                        : static_cast<double>(a.rows());
  if (n == 0.0) throw ShapeMismatch("mean of an empty value");
  Value s = sum(a, axis);
  return scale(s, 1.0 / n);
}

Value l2norm(const Value& a, Axis axis) {
  const int ia = a.node_id();
  switch (axis) {
    case Axis::All:
      return a.tape()->record(Matrix::Constant(1, 1, a.data().norm()), {ia}, "l2norm", [ia](Tape& t, int self) {
        const double norm = t.node(self).data(0, 0);
        if (norm == 0.0) return;
        t.accumulate(ia, (t.node(self).grad(0, 0) / norm) * t.node(ia).data);
      });
    case Axis::Rows:
      return a.tape()->record(a.data().rowwise().norm(), {ia}, "l2norm_rows", [ia](Tape& t, int self) {
        const Matrix& norms = t.node(self).data;
        const Matrix& g = t.node(self).grad;
        Eigen::VectorXd coef(norms.rows());
        for (Eigen::Index r = 0; r < norms.rows(); ++r) coef(r) = norms(r, 0) > 0.0 ? g(r, 0) / norms(r, 0) : 0.0;
        t.accumulate(ia, coef.asDiagonal() * t.node(ia).data);
      });
    case Axis::Cols:
      return a.tape()->record(a.data().colwise().norm(), {ia}, "l2norm_cols", [ia](Tape& t, int self) {
        const Matrix& norms = t.node(self).data;
        const Matrix& g = t.node(self).grad;
        Eigen::VectorXd coef(norms.cols());
        for (Eigen::Index c = 0; c < norms.cols(); ++c) coef(c) = norms(0, c) > 0.0 ? g(0, c) / norms(0, c) : 0.0;
        t.accumulate(ia, t.node(ia).data * coef.asDiagonal());
      });
  }
  throw InvalidArgument("l2norm: bad axis");
}

Value concat_rows(const Value& a, const Value& b, int blocks) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) throw ShapeMismatch("concat_rows: column counts differ");
  if (blocks < 1 || a.rows() % blocks != 0 || b.rows() % blocks != 0) {
    throw ShapeMismatch("concat_rows: rows not divisible into " + std::to_string(blocks) + " blocks");
  }
  const Eigen::Index na = a.rows() / blocks;
  const Eigen::Index nb = b.rows() / blocks;
  Matrix out(a.rows() + b.rows(), a.cols());
  for (int k = 0; k < blocks; ++k) {
    out.middleRows(k * (na + nb), na) = a.data().middleRows(k * na, na);
    out.middleRows(k * (na + nb) + na, nb) = b.data().middleRows(k * nb, nb);
  }
  const int ia = a.node_id();
  const int ib = b.node_id();
  return a.tape()->record(std::move(out), {ia, ib}, "concat_rows", [ia, ib, na, nb, blocks](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    for (int k = 0; k < blocks; ++k) {
      if (t.wants_grad(ia)) t.node(ia).grad.middleRows(k * na, na) += g.middleRows(k * (na + nb), na);
      if (t.wants_grad(ib)) t.node(ib).grad.middleRows(k * nb, nb) += g.middleRows(k * (na + nb) + na, nb);
    }
  });
}

Value slice_rows(const Value& a, Eigen::Index start, Eigen::Index count, int blocks) {
  if (blocks < 1 || a.rows() % blocks != 0) throw ShapeMismatch("slice_rows: rows not divisible into blocks");
  const Eigen::Index n = a.rows() / blocks;
  if (start < 0 || count < 0 || start + count > n) throw ShapeMismatch("slice_rows: range outside block");
  Matrix out(count * blocks, a.cols());
  for (int k = 0; k < blocks; ++k) out.middleRows(k * count, count) = a.data().middleRows(k * n + start, count);
  const int ia = a.node_id();
  return a.tape()->record(std::move(out), {ia}, "slice_rows", [ia, n, start, count, blocks](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    for (int k = 0; k < blocks; ++k) t.node(ia).grad.middleRows(k * n + start, count) += g.middleRows(k * count, count);
  });
}

Value block_left_multiply(const Matrix& M, const Value& a, int blocks) {
  if (blocks < 1 || a.rows() != blocks * M.cols()) {
    throw ShapeMismatch("block_left_multiply: " + shape(a.data()) + " is not " + std::to_string(blocks) +
                        " blocks of " + std::to_string(M.cols()) + " rows");
  }
  const Eigen::Index n = M.cols();
  const Eigen::Index m = M.rows();
  const Eigen::Index c = a.cols();
  // A column-major (blocks*n) x c matrix is the same memory as an n x (blocks*c)
  // matrix whose columns are the per-block columns, so one product covers all blocks.
  Matrix out(blocks * m, c);
  {
    ConstMapMatrix in(a.data().data(), n, blocks * c);
    MapMatrix res(out.data(), m, blocks * c);
    res.noalias() = M * in;
  }
  const int ia = a.node_id();
  return a.tape()->record(std::move(out), {ia}, "block_left_multiply", [ia, M, n, m, c, blocks](Tape& t, int self) {
    if (!t.wants_grad(ia)) return;
    ConstMapMatrix g(t.node(self).grad.data(), m, blocks * c);
    MapMatrix ga(t.node(ia).grad.data(), n, blocks * c);
    ga.noalias() += M.transpose() * g;
  });
}

Value block_right_multiply(const Value& a, const std::vector<Matrix>& mats) {
  const auto blocks = static_cast<Eigen::Index>(mats.size());
  if (blocks == 0 || a.rows() % blocks != 0) throw ShapeMismatch("block_right_multiply: rows not divisible");
  const Eigen::Index n = a.rows() / blocks;
  const Eigen::Index cout = mats.front().cols();
  Matrix out(a.rows(), cout);
  for (Eigen::Index k = 0; k < blocks; ++k) {
    const Matrix& M = mats[static_cast<std::size_t>(k)];
    if (M.rows() != a.cols() || M.cols() != cout) throw ShapeMismatch("block_right_multiply: block matrix shape");
    out.middleRows(k * n, n).noalias() = a.data().middleRows(k * n, n) * M;
  }
  const int ia = a.node_id();
  return a.tape()->record(std::move(out), {ia}, "block_right_multiply", [ia, mats, n](Tape& t, int self) {
    if (!t.wants_grad(ia)) return;
    const Matrix& g = t.node(self).grad;
    Matrix& ga = t.node(ia).grad;
    for (std::size_t k = 0; k < mats.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k) * n;
      ga.middleRows(r, n).noalias() += g.middleRows(r, n) * mats[k].transpose();
    }
  });
}

Value perspective_divide(const Value& a, double min_depth) {
  if (a.cols() != 3) throw ShapeMismatch("perspective_divide: expected 3 columns, got " + shape(a.data()));
  const Matrix& x = a.data();
  Matrix out(x.rows(), 2);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (!(x(r, 2) > min_depth)) throw NonPositiveDepth(r);
    out(r, 0) = x(r, 0) / x(r, 2);
    out(r, 1) = x(r, 1) / x(r, 2);
  }
  const int ia = a.node_id();
  return a.tape()->record(std::move(out), {ia}, "perspective_divide", [ia](Tape& t, int self) {
    const Matrix& x = t.node(ia).data;
    const Matrix& g = t.node(self).grad;
    Matrix& ga = t.node(ia).grad;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double inv_z = 1.0 / x(r, 2);
      ga(r, 0) += g(r, 0) * inv_z;
      ga(r, 1) += g(r, 1) * inv_z;
      ga(r, 2) -= (g(r, 0) * x(r, 0) + g(r, 1) * x(r, 1)) * inv_z * inv_z;
    }
  });
}

Value rowwise_cosine(const Value& a, const Value& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "rowwise_cosine");
  const Matrix& x = a.data();
  const Matrix& y = b.data();
  Matrix out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double nx = x.row(r).norm();
    const double ny = y.row(r).norm();
    out(r, 0) = (nx > 0.0 && ny > 0.0) ? x.row(r).dot(y.row(r)) / (nx * ny) : 1.0;
  }
  const int ia = a.node_id();
  const int ib = b.node_id();
  return a.tape()->record(std::move(out), {ia, ib}, "rowwise_cosine", [ia, ib](Tape& t, int self) {
    const Matrix& x = t.node(ia).data;
    const Matrix& y = t.node(ib).data;
    const Matrix& cosv = t.node(self).data;
    const Matrix& g = t.node(self).grad;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double nx = x.row(r).norm();
      const double ny = y.row(r).norm();
      if (nx == 0.0 || ny == 0.0) continue;
      const double c = cosv(r, 0);
      if (t.wants_grad(ia)) {
        t.node(ia).grad.row(r) += g(r, 0) * (y.row(r) / (nx * ny) - c * x.row(r) / (nx * nx));
      }
      if (t.wants_grad(ib)) {
        t.node(ib).grad.row(r) += g(r, 0) * (x.row(r) / (nx * ny) - c * y.row(r) / (ny * ny));
      }
    }
  });
}

Value flatten_blocks(const Value& a, int blocks) {
  if (blocks < 1 || a.rows() % blocks != 0) throw ShapeMismatch("flatten_blocks: rows not divisible");
  const Eigen::Index n = a.rows() / blocks;
  const Eigen::Index c = a.cols();
  Matrix out(blocks, n * c);
  for (int k = 0; k < blocks; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) out(k, i * c + j) = a.data()(k * n + i, j);
    }
  }
  const int ia = a.node_id();
  return a.tape()->record(std::move(out), {ia}, "flatten_blocks", [ia, n, c, blocks](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    Matrix& ga = t.node(ia).grad;
    for (int k = 0; k < blocks; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) ga(k * n + i, j) += g(k, i * c + j);
      }
    }
  });
}

Value unflatten_blocks(const Value& a, Eigen::Index cols) {
  if (cols < 1 || a.cols() % cols != 0) throw ShapeMismatch("unflatten_blocks: width not divisible");
  const Eigen::Index blocks = a.rows();
  const Eigen::Index n = a.cols() / cols;
  Matrix out(blocks * n, cols);
  for (Eigen::Index k = 0; k < blocks; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) out(k * n + i, j) = a.data()(k, i * cols + j);
    }
  }
  const int ia = a.node_id();
  return a.tape()->record(std::move(out), {ia}, "unflatten_blocks", [ia, n, cols, blocks](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    Matrix& ga = t.node(ia).grad;
    for (Eigen::Index k = 0; k < blocks; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) ga(k, i * cols + j) += g(k * n + i, j);
      }
    }
  });
}

GradCheckReport grad_check(const LossBuilder& f, std::vector<Matrix> params, const GradCheckOptions& opts) {
  GradCheckReport report;

  Tape tape;
  std::vector<Value> leaves;
  for (const auto& p : params) leaves.push_back(tape.leaf(p, "param"));
  const Value loss = f(tape, leaves);
  tape.backward(loss);
  std::vector<Matrix> analytic;
  for (const auto& v : leaves) analytic.push_back(v.grad());

  auto evaluate = [&]() {
    Tape t;
    std::vector<Value> ls;
    for (const auto& p : params) ls.push_back(t.leaf(p, "param"));
    return f(t, ls).item();
  };

  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params[p].size(); ++i) coords.emplace_back(p, i);
  }
  if (static_cast<std::size_t>(opts.samples) < coords.size()) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(opts.samples));
  }

  const double f0 = loss.item();
  for (const auto& [p, i] : coords) {
    double& x = params[p].data()[i];
    const double saved = x;
    x = saved + opts.eps;
    const double f_plus = evaluate();
    x = saved - opts.eps;
    const double f_minus = evaluate();
    x = saved;

    const double fwd = (f_plus - f0) / opts.eps;
    const double bwd = (f0 - f_minus) / opts.eps;
    if (std::abs(fwd - bwd) > opts.kink_tol * std::max({1.0, std::abs(fwd), std::abs(bwd)})) {
      ++report.skipped_kinks;
      continue;
    }
    const double numeric = (f_plus - f_minus) / (2.0 * opts.eps);
    const double a = analytic[p].data()[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.checked;
  }
  report.passed = report.checked > 0 && report.max_rel_error < opts.tol;
  return report;
}

}  // namespace cvpose::ad
