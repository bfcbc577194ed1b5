#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include "cvpose/errors.hpp"
#include "cvpose/svd.hpp"

namespace cvpose {

/// Similarity transform x -> scale * R * x + t.
template <typename Scalar>
struct Similarity {
  Scalar scale = Scalar(1);
  Eigen::Matrix<Scalar, 3, 3> R = Eigen::Matrix<Scalar, 3, 3>::Identity();
  Eigen::Matrix<Scalar, 3, 1> t = Eigen::Matrix<Scalar, 3, 1>::Zero();
};

/// Least-squares similarity mapping rows of `source` onto rows of `target`
/// (Umeyama closed form with reflection correction).
template <typename Scalar>
Similarity<Scalar> fit_similarity(const Eigen::Matrix<Scalar, Eigen::Dynamic, 3>& source,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, 3>& target) {
  if (source.rows() != target.rows()) throw ShapeMismatch("procrustes: joint counts differ");
  const Eigen::Matrix<Scalar, 1, 3> mu_s = source.colwise().mean();
  const Eigen::Matrix<Scalar, 1, 3> mu_t = target.colwise().mean();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 3> s = source.rowwise() - mu_s;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 3> g = target.rowwise() - mu_t;
  if (g.squaredNorm() == Scalar(0)) throw DegenerateCloud("procrustes: target joints coincide");

  const Eigen::Matrix<Scalar, 3, 3> cov = s.transpose() * g;
  const SmallSvd<Scalar> svd = svd_small(cov);
  const Eigen::Matrix<Scalar, 3, 3> U = svd.U;
  const Eigen::Matrix<Scalar, 3, 3> V = svd.V;
  Eigen::Matrix<Scalar, 3, 1> d = Eigen::Matrix<Scalar, 3, 1>::Ones();
  if ((V * U.transpose()).determinant() < Scalar(0)) d(2) = Scalar(-1);

  Similarity<Scalar> sim;
  sim.R = V * d.asDiagonal() * U.transpose();
  const Scalar source_norm = s.squaredNorm();
  sim.scale = source_norm > Scalar(0) ? svd.singular_values.dot(d) / source_norm : Scalar(0);
  sim.t = mu_t.transpose() - sim.scale * sim.R * mu_s.transpose();
  return sim;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 3> apply_similarity(const Similarity<Scalar>& sim,
                                                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 3>& pts) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> out = (sim.scale * pts * sim.R.transpose());
  out.rowwise() += sim.t.transpose();
  return out;
}

/// Prediction aligned to the ground truth in translation, rotation and scale.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 3> procrustes_align(const Eigen::Matrix<Scalar, Eigen::Dynamic, 3>& pred,
                                                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 3>& gt) {
  return apply_similarity(fit_similarity(pred, gt), pred);
}

}  // namespace cvpose
