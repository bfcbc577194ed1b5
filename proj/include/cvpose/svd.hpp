#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "cvpose/errors.hpp"

namespace cvpose {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Thin SVD M = U * diag(singular_values) * V^T with k = min(m, n) columns in U and V.
template <typename Scalar>
struct SmallSvd {
  MatrixX<Scalar> U;
  VectorX<Scalar> singular_values;
  MatrixX<Scalar> V;
};

namespace detail {

// Hestenes one-sided Jacobi on a tall matrix (rows >= cols).
template <typename Scalar>
SmallSvd<Scalar> one_sided_jacobi(MatrixX<Scalar> W, int max_sweeps) {
  const Eigen::Index m = W.rows();
  const Eigen::Index n = W.cols();
  MatrixX<Scalar> V = MatrixX<Scalar>::Identity(n, n);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  // Columns this small are numerically zero; rotating them only stirs rounding noise.
  const Scalar tiny = eps * eps * W.squaredNorm();
  const Scalar orth_tol = Scalar(m) * eps;

  bool converged = n < 2;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar alpha = W.col(p).squaredNorm();
        const Scalar beta = W.col(q).squaredNorm();
        const Scalar gamma = W.col(p).dot(W.col(q));
        if (alpha <= tiny || beta <= tiny) continue;
        if (std::abs(gamma) <= orth_tol * std::sqrt(alpha * beta)) continue;
        converged = false;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Eigen::Index i = 0; i < m; ++i) {
          const Scalar wp = W(i, p);
          const Scalar wq = W(i, q);
          W(i, p) = c * wp - s * wq;
          W(i, q) = s * wp + c * wq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const Scalar vp = V(i, p);
          const Scalar vq = V(i, q);
          V(i, p) = c * vp - s * vq;
          V(i, q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) throw NoConvergence("one-sided Jacobi SVD did not converge");

  VectorX<Scalar> sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) sigma(i) = W.col(i).norm();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return sigma(a) > sigma(b); });

  SmallSvd<Scalar> out;
  out.U.resize(m, n);
  out.V.resize(n, n);
  out.singular_values.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.singular_values(k) = sigma(order[k]);
    out.V.col(k) = V.col(order[k]);
  }

  // Columns with negligible singular values get an orthonormal completion.
  const Scalar sigma_max = n > 0 ? out.singular_values(0) : Scalar(0);
  const Scalar zero_tol = Scalar(n) * eps * sigma_max;
  std::vector<bool> filled(static_cast<std::size_t>(n), false);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (out.singular_values(k) > zero_tol && out.singular_values(k) > Scalar(0)) {
      out.U.col(k) = W.col(order[k]) / out.singular_values(k);
      filled[static_cast<std::size_t>(k)] = true;
    }
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (filled[static_cast<std::size_t>(k)]) continue;
    for (Eigen::Index e = 0; e < m; ++e) {
      VectorX<Scalar> cand = VectorX<Scalar>::Unit(m, e);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index j = 0; j < n; ++j) {
          if (filled[static_cast<std::size_t>(j)]) cand -= out.U.col(j).dot(cand) * out.U.col(j);
        }
      }
      const Scalar norm = cand.norm();
      if (norm > Scalar(0.5)) {
        out.U.col(k) = cand / norm;
        filled[static_cast<std::size_t>(k)] = true;
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// SVD of a small dense matrix by one-sided Jacobi rotations.
///
/// Singular values are sorted in descending order. Each right singular vector
/// is signed so that its largest-magnitude entry (first one on ties) is
/// non-negative; the matching left vector is flipped with it.
template <typename Derived>
SmallSvd<typename Derived::Scalar> svd_small(const Eigen::MatrixBase<Derived>& M, int max_sweeps = 64) {
  using Scalar = typename Derived::Scalar;
  if (!M.allFinite()) throw InvalidArgument("svd_small: non-finite input");

  SmallSvd<Scalar> out;
  if (M.rows() >= M.cols()) {
    out = detail::one_sided_jacobi<Scalar>(M, max_sweeps);
  } else {
    SmallSvd<Scalar> t = detail::one_sided_jacobi<Scalar>(M.transpose(), max_sweeps);
    out.U = std::move(t.V);
    out.V = std::move(t.U);
    out.singular_values = std::move(t.singular_values);
  }

  for (Eigen::Index k = 0; k < out.V.cols(); ++k) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < out.V.rows(); ++i) {
      if (std::abs(out.V(i, k)) > std::abs(out.V(best, k))) best = i;
    }
    if (out.V(best, k) < Scalar(0)) {
      out.V.col(k) = -out.V.col(k);
      out.U.col(k) = -out.U.col(k);
    }
  }
  return out;
}

}  // namespace cvpose
