#pragma once

#include <string>

#include <Eigen/Core>

#include "cvpose/errors.hpp"

namespace cvpose {

using Joints2D = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using Joints3D = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// 2D keypoints of one view, in pixels.
struct Pose2D {
  Joints2D joints;
  std::string view_id;
};

/// 3D joints in millimeters, expressed in the frame named by frame_id.
struct Pose3D {
  Joints3D joints;
  std::string frame_id;
};

/// Rigid motion x' = R x + t (t in millimeters).
template <typename Scalar>
struct RigidTransformT {
  Eigen::Matrix<Scalar, 3, 3> R = Eigen::Matrix<Scalar, 3, 3>::Identity();
  Eigen::Matrix<Scalar, 3, 1> t = Eigen::Matrix<Scalar, 3, 1>::Zero();

  static RigidTransformT identity() { return {}; }

  Eigen::Matrix<Scalar, 3, 1> operator*(const Eigen::Matrix<Scalar, 3, 1>& x) const { return R * x + t; }

  RigidTransformT inverse() const {
    RigidTransformT inv;
    inv.R = R.transpose();
    inv.t = -(inv.R * t);
    return inv;
  }
};

using RigidTransform = RigidTransformT<double>;

/// (a * b)(x) = a(b(x)).
template <typename Scalar>
RigidTransformT<Scalar> compose(const RigidTransformT<Scalar>& a, const RigidTransformT<Scalar>& b) {
  RigidTransformT<Scalar> out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  return out;
}

/// Max-norm of R^T R - I.
template <typename Scalar>
Scalar orthonormality_error(const Eigen::Matrix<Scalar, 3, 3>& R) {
  return (R.transpose() * R - Eigen::Matrix<Scalar, 3, 3>::Identity()).cwiseAbs().maxCoeff();
}

/// Pinhole camera. R, t map world coordinates into the camera frame.
struct CameraModel {
  std::string id;
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int width = 0;
  int height = 0;

  RigidTransform world_to_camera() const { return {R, t}; }
  Eigen::Vector3d center() const { return -(R.transpose() * t); }

  /// Throws InvalidArgument if R is not a proper rotation or K is malformed.
  void validate(double tol = 1e-9) const;
};

/// Transform taking points in `from`'s frame into `to`'s frame.
RigidTransform relative_transform(const CameraModel& to, const CameraModel& from);

/// Pinhole projection of one camera-frame point.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project_point(const Eigen::Matrix<Scalar, 3, 3>& K,
                                          const Eigen::Matrix<Scalar, 3, 1>& X) {
  const Eigen::Matrix<Scalar, 3, 1> h = K * X;
  return h.template head<2>() / X.z();
}

/// Projects a pose given in the camera's own frame. Throws NonPositiveDepth.
Pose2D project(const CameraModel& cam, const Pose3D& X, double min_depth = 1e-6);

/// Applies T to every joint; the result is tagged with `frame_id`.
Pose3D transform_pose(const RigidTransform& T, const Pose3D& X, const std::string& frame_id);
Pose3D transform_pose(const RigidTransform& T, const Pose3D& X);

/// Rotation about a unit axis by `angle` radians.
Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle);

}  // namespace cvpose
