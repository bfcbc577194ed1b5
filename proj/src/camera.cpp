#include "cvpose/camera.hpp"

#include <cmath>

#include <Eigen/Geometry>

namespace cvpose {

void CameraModel::validate(double tol) const {
  if (!K.allFinite() || !R.allFinite() || !t.allFinite()) {
    throw InvalidArgument("camera '" + id + "': non-finite parameters");
  }
  if (orthonormality_error<double>(R) >= tol || R.determinant() <= 0.0) {
    throw InvalidArgument("camera '" + id + "': R is not a proper rotation");
  }
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0) {
    throw InvalidArgument("camera '" + id + "': K must be upper-triangular with K[2,2] = 1");
  }
  if (K(0, 0) <= 0.0 || K(1, 1) <= 0.0) {
    throw InvalidArgument("camera '" + id + "': focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) throw InvalidArgument("camera '" + id + "': image size must be positive");
}

RigidTransform relative_transform(const CameraModel& to, const CameraModel& from) {
  RigidTransform T;
  T.R = to.R * from.R.transpose();
  T.t = to.t - T.R * from.t;
  return T;
}

Pose2D project(const CameraModel& cam, const Pose3D& X, double min_depth) {
  Pose2D out;
  out.view_id = cam.id;
  out.joints.resize(X.joints.rows(), 2);
  for (Eigen::Index j = 0; j < X.joints.rows(); ++j) {
    const Eigen::Vector3d p = X.joints.row(j).transpose();
    if (!(p.z() > min_depth)) throw NonPositiveDepth(j, cam.id);
    out.joints.row(j) = project_point<double>(cam.K, p).transpose();
  }
  return out;
}

Pose3D transform_pose(const RigidTransform& T, const Pose3D& X, const std::string& frame_id) {
  Pose3D out;
  out.frame_id = frame_id;
  out.joints = X.joints * T.R.transpose();
  out.joints.rowwise() += T.t.transpose();
  return out;
}

Pose3D transform_pose(const RigidTransform& T, const Pose3D& X) { return transform_pose(T, X, X.frame_id); }

Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace cvpose
