#pragma once

#include <vector>

#include "cvpose/autodiff.hpp"
#include "cvpose/camera.hpp"
#include "cvpose/skeleton.hpp"

namespace cvpose {

struct LossWeights {
  double reprojection = 1.0;
  double symmetry = 1.0;
  double transform = 1.0;
  double bone_direction = 0.1;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double reprojection = 0.0;
  double symmetry = 0.0;
  double transform_consistency = 0.0;
  double bone_direction = 0.0;
};

/// Geometry of one sample's camera pair as assumed by training: intrinsics
/// and T12, which maps camera-2 coordinates into camera 1.
struct ViewPairGeometry {
  Eigen::Matrix3d K1 = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d K2 = Eigen::Matrix3d::Identity();
  RigidTransform T12;
};

/// Everything besides the refined poses that the losses need, for `blocks`
/// samples stacked J rows each.
struct LossBatch {
  int blocks = 0;
  /// 2D annotations, (blocks * J) x 2 pixels.
  Eigen::MatrixXd y1;
  Eigen::MatrixXd y2;
  std::vector<ViewPairGeometry> geometry;
};

struct LossOptions {
  LossWeights weights;
  /// Count each transform-consistency direction once per view, as in the
  /// literal two-view sum.
  bool legacy_eq12_double = false;
  double min_depth = 1e-6;
};

// Each loss sums per-joint (or per-bone) terms over the batch and divides by
// the number of samples. Poses are (blocks * J) x 3 in their camera frames.

/// Pixel distance between projections of the refined poses and the annotations.
/// Throws NonPositiveDepth naming the sample, view, and joint.
ad::Value reprojection_loss(const ad::Value& X1, const ad::Value& X2, const LossBatch& batch,
                            double min_depth = 1e-6);
/// |length(left bone) - length(right bone)| over mirrored bone pairs, both views.
ad::Value symmetry_loss(const ad::Value& X1, const ad::Value& X2, const SkeletonTopology& topo, int blocks);
/// Distance between each view's pose and the other view's pose carried over by T12.
ad::Value transform_consistency_loss(const ad::Value& X1, const ad::Value& X2,
                                     const std::vector<ViewPairGeometry>& geometry, bool legacy_double = false);
/// 1 - cos between each bone and its counterpart carried over from the other view.
ad::Value bone_direction_loss(const ad::Value& X1, const ad::Value& X2, const std::vector<ViewPairGeometry>& geometry,
                              const SkeletonTopology& topo);

struct LossParts {
  ad::Value reprojection;
  ad::Value symmetry;
  ad::Value transform_consistency;
  ad::Value bone_direction;
};

struct WeightedLoss {
  ad::Value total;
  LossBreakdown breakdown;
};

/// Weighted sum on the tape, with the unweighted parts recorded off the tape.
WeightedLoss total_loss(const LossParts& parts, const LossWeights& weights);

/// All four losses and their weighted total for a batch.
WeightedLoss compute_losses(const ad::Value& X1, const ad::Value& X2, const LossBatch& batch,
                            const SkeletonTopology& topo, const LossOptions& options = {});

}  // namespace cvpose
