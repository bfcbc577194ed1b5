#include "cvpose/losses.hpp"

#include <cmath>

namespace cvpose {

namespace {

using ad::Matrix;
using ad::Value;

void check_batch(const Value& X1, const Value& X2, int blocks) {
  if (blocks < 1) throw ShapeMismatch("loss: batch must hold at least one sample");
  if (X1.rows() != X2.rows() || X1.cols() != 3 || X2.cols() != 3 || X1.rows() % blocks != 0) {
    throw ShapeMismatch("loss: poses must be (blocks * J) x 3 and agree across views");
  }
}

int blocks_of(const std::vector<ViewPairGeometry>& g) { return static_cast<int>(g.size()); }

// Per-sample transposed rotations: rows x map to x * R^T.
std::vector<Matrix> rotations_t(const std::vector<ViewPairGeometry>& g, bool inverse) {
  std::vector<Matrix> out;
  out.reserve(g.size());
  for (const auto& s : g) out.emplace_back(inverse ? Matrix(s.T12.R) : Matrix(s.T12.R.transpose()));
  return out;
}

// Rows of each sample's translation, repeated over its J joints.
Matrix translations(const std::vector<ViewPairGeometry>& g, Eigen::Index J, bool inverse) {
  Matrix out(static_cast<Eigen::Index>(g.size()) * J, 3);
  for (std::size_t b = 0; b < g.size(); ++b) {
    const Eigen::Vector3d t = inverse ? Eigen::Vector3d(g[b].T12.inverse().t) : g[b].T12.t;
    out.middleRows(static_cast<Eigen::Index>(b) * J, J).rowwise() = t.transpose();
  }
  return out;
}

Value projected(const Value& X, const std::vector<Matrix>& Kt, int view, double min_depth) {
  const Value P = ad::block_right_multiply(X, Kt);
  try {
    return ad::perspective_divide(P, min_depth);
  } catch (const NonPositiveDepth& e) {
    const auto J = X.rows() / static_cast<Eigen::Index>(Kt.size());
    throw NonPositiveDepth(e.joint() % J, "view " + std::to_string(view) + ", sample " + std::to_string(e.joint() / J));
  }
}

Matrix left_right_difference(const SkeletonTopology& topo) {
  Matrix D = Matrix::Zero(static_cast<Eigen::Index>(topo.left_right_bone_pairs.size()), topo.num_bones());
  for (std::size_t p = 0; p < topo.left_right_bone_pairs.size(); ++p) {
    D(static_cast<Eigen::Index>(p), topo.left_right_bone_pairs[p].first) = 1.0;
    D(static_cast<Eigen::Index>(p), topo.left_right_bone_pairs[p].second) = -1.0;
  }
  return D;
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {reprojection, symmetry, transform, bone_direction}) {
    if (!std::isfinite(w) || w < 0.0) throw InvalidArgument("loss weights must be finite and non-negative");
  }
}

Value reprojection_loss(const Value& X1, const Value& X2, const LossBatch& batch, double min_depth) {
  check_batch(X1, X2, batch.blocks);
  if (batch.geometry.size() != static_cast<std::size_t>(batch.blocks)) throw ShapeMismatch("reprojection_loss: geometry count");
  if (batch.y1.rows() != X1.rows() || batch.y2.rows() != X2.rows() || batch.y1.cols() != 2 || batch.y2.cols() != 2) {
    throw ShapeMismatch("reprojection_loss: annotations must be (blocks * J) x 2");
  }
  std::vector<Matrix> K1t, K2t;
  for (const auto& g : batch.geometry) {
    K1t.emplace_back(g.K1.transpose());
    K2t.emplace_back(g.K2.transpose());
  }
  ad::Tape& tape = *X1.tape();
  const Value e1 = ad::l2norm(projected(X1, K1t, 1, min_depth) - tape.constant(batch.y1, "y1"), ad::Axis::Rows);
  const Value e2 = ad::l2norm(projected(X2, K2t, 2, min_depth) - tape.constant(batch.y2, "y2"), ad::Axis::Rows);
  return ad::scale(ad::sum(e1) + ad::sum(e2), 1.0 / batch.blocks);
}

Value symmetry_loss(const Value& X1, const Value& X2, const SkeletonTopology& topo, int blocks) {
  check_batch(X1, X2, blocks);
  const Matrix S = bone_incidence(topo);
  const Matrix D = left_right_difference(topo);
  auto one_view = [&](const Value& X) {
    const Value lengths = ad::l2norm(ad::block_left_multiply(S, X, blocks), ad::Axis::Rows);
    // Norm of a 1-vector: the absolute difference, with gradient 0 at 0.
    return ad::sum(ad::l2norm(ad::block_left_multiply(D, lengths, blocks), ad::Axis::Rows));
  };
  return ad::scale(one_view(X1) + one_view(X2), 1.0 / blocks);
}

Value transform_consistency_loss(const Value& X1, const Value& X2, const std::vector<ViewPairGeometry>& geometry,
                                 bool legacy_double) {
  const int blocks = blocks_of(geometry);
  check_batch(X1, X2, blocks);
  const Eigen::Index J = X1.rows() / blocks;
  ad::Tape& tape = *X1.tape();
  const Value X1_from_2 = ad::block_right_multiply(X2, rotations_t(geometry, false)) +
                          tape.constant(translations(geometry, J, false), "t12");
  const Value X2_from_1 = ad::block_right_multiply(X1, rotations_t(geometry, true)) +
                          tape.constant(translations(geometry, J, true), "t21");
  const Value total = ad::sum(ad::l2norm(X1 - X1_from_2, ad::Axis::Rows)) +
                      ad::sum(ad::l2norm(X2 - X2_from_1, ad::Axis::Rows));
  return ad::scale(total, (legacy_double ? 2.0 : 1.0) / blocks);
}

Value bone_direction_loss(const Value& X1, const Value& X2, const std::vector<ViewPairGeometry>& geometry,
                          const SkeletonTopology& topo) {
  const int blocks = blocks_of(geometry);
  check_batch(X1, X2, blocks);
  const Matrix S = bone_incidence(topo);
  const Value b1 = ad::block_left_multiply(S, X1, blocks);
  const Value b2 = ad::block_left_multiply(S, X2, blocks);
  // Translations cancel in bone vectors; only the rotations act.
  const Value b1_from_2 = ad::block_right_multiply(b2, rotations_t(geometry, false));
  const Value b2_from_1 = ad::block_right_multiply(b1, rotations_t(geometry, true));
  const double terms = 2.0 * static_cast<double>(b1.rows());
  const Value cos_sum = ad::sum(ad::rowwise_cosine(b1, b1_from_2)) + ad::sum(ad::rowwise_cosine(b2, b2_from_1));
  // sum(1 - cos) = terms - sum(cos)
  ad::Tape& tape = *X1.tape();
  return ad::scale(tape.constant(Matrix::Constant(1, 1, terms), "bone_terms") - cos_sum, 1.0 / blocks);
}

WeightedLoss total_loss(const LossParts& parts, const LossWeights& w) {
  w.validate();
  for (const Value* v : {&parts.reprojection, &parts.symmetry, &parts.transform_consistency, &parts.bone_direction}) {
    if (v->rows() != 1 || v->cols() != 1) throw NotScalar("total_loss: every part must be 1x1");
  }
  WeightedLoss out;
  out.total = w.reprojection * parts.reprojection + w.symmetry * parts.symmetry +
              w.transform * parts.transform_consistency + w.bone_direction * parts.bone_direction;
  out.breakdown.reprojection = parts.reprojection.item();
  out.breakdown.symmetry = parts.symmetry.item();
  out.breakdown.transform_consistency = parts.transform_consistency.item();
  out.breakdown.bone_direction = parts.bone_direction.item();
  out.breakdown.total = out.total.item();
  return out;
}

WeightedLoss compute_losses(const Value& X1, const Value& X2, const LossBatch& batch, const SkeletonTopology& topo,
                            const LossOptions& options) {
  LossParts parts;
  parts.reprojection = reprojection_loss(X1, X2, batch, options.min_depth);
  parts.symmetry = symmetry_loss(X1, X2, topo, batch.blocks);
  parts.transform_consistency = transform_consistency_loss(X1, X2, batch.geometry, options.legacy_eq12_double);
  parts.bone_direction = bone_direction_loss(X1, X2, batch.geometry, topo);
  return total_loss(parts, options.weights);
}

}  // namespace cvpose
