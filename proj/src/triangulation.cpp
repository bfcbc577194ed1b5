#include "cvpose/triangulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "cvpose/svd.hpp"

namespace cvpose {

TriangulationMode parse_triangulation_mode(std::string_view text) {
  if (text == "dual") return TriangulationMode::Dual;
  if (text == "single") return TriangulationMode::Single;
  throw InvalidArgument("unknown triangulation mode '" + std::string(text) + "' (expected dual|single)");
}

std::string_view to_string(TriangulationMode mode) { return mode == TriangulationMode::Dual ? "dual" : "single"; }

namespace {

using Matrix34d = Eigen::Matrix<double, 3, 4>;

void add_view_rows(Eigen::Matrix4d& A, int row, const Eigen::Vector2d& u, const Matrix34d& P) {
  A.row(row) = u.x() * P.row(2) - P.row(0);
  A.row(row + 1) = u.y() * P.row(2) - P.row(1);
}

}  // namespace

Eigen::Vector3d triangulate_joint(const Eigen::Vector2d& u1, const Eigen::Vector2d& u2, const CameraModel& cam1,
                                  const CameraModel& cam2, OriginView origin, const TriangulationTolerances& tol) {
  if (!u1.allFinite() || !u2.allFinite()) throw InvalidArgument("triangulate_joint: non-finite 2D input");

  const bool first = origin == OriginView::First;
  const CameraModel& ref = first ? cam1 : cam2;
  const CameraModel& other = first ? cam2 : cam1;
  const Eigen::Vector2d& u_ref = first ? u1 : u2;
  const Eigen::Vector2d& u_other = first ? u2 : u1;

  const RigidTransform T = relative_transform(other, ref);
  if (T.t.norm() < tol.min_baseline_mm) throw DegenerateGeometry("camera centers coincide");

  // Work in normalized image coordinates with the baseline as the length
  // unit; raw pixels and millimeters leave A badly conditioned under noise.
  const double scale = T.t.norm();
  Matrix34d P_ref = Matrix34d::Zero();
  P_ref.leftCols<3>().setIdentity();
  Matrix34d P_other;
  P_other.leftCols<3>() = T.R;
  P_other.col(3) = T.t / scale;
  const auto normalized = [](const Eigen::Matrix3d& K, const Eigen::Vector2d& u) -> Eigen::Vector2d {
    return (K.inverse() * u.homogeneous()).hnormalized();
  };

  Eigen::Matrix4d A;
  add_view_rows(A, 0, normalized(ref.K, u_ref), P_ref);
  add_view_rows(A, 2, normalized(other.K, u_other), P_other);
  for (int r = 0; r < 4; ++r) {
    const double n = A.row(r).norm();
    if (n > 0.0) A.row(r) /= n;
  }

  const SmallSvd<double> svd = svd_small(A);
  const Eigen::Vector4d& s = svd.singular_values;
  if (s(2) - s(3) <= tol.singular_gap * std::max(s(0), 1.0)) {
    throw DegenerateGeometry("two smallest singular values coincide");
  }
  const Eigen::Vector4d h = svd.V.col(3);
  if (std::abs(h(3)) <= std::numeric_limits<double>::epsilon() * h.head<3>().norm()) {
    throw DegenerateGeometry("triangulated point at infinity");
  }
  return scale * h.head<3>() / h(3);
}

std::pair<Pose3D, Pose3D> triangulate_pose(const Pose2D& x1, const Pose2D& x2, const CameraModel& cam1,
                                           const CameraModel& cam2, TriangulationMode mode,
                                           const TriangulationTolerances& tol) {
  if (x1.joints.rows() != x2.joints.rows()) throw ShapeMismatch("triangulate_pose: joint counts differ");
  const Eigen::Index J = x1.joints.rows();

  Pose3D X1{Joints3D(J, 3), cam1.id};
  Pose3D X2{Joints3D(J, 3), cam2.id};
  for (Eigen::Index j = 0; j < J; ++j) {
    const Eigen::Vector2d u1 = x1.joints.row(j).transpose();
    const Eigen::Vector2d u2 = x2.joints.row(j).transpose();
    try {
      X1.joints.row(j) = triangulate_joint(u1, u2, cam1, cam2, OriginView::First, tol).transpose();
      if (mode == TriangulationMode::Dual) {
        X2.joints.row(j) = triangulate_joint(u1, u2, cam1, cam2, OriginView::Second, tol).transpose();
      }
    } catch (const DegenerateGeometry& e) {
      throw DegenerateGeometry("triangulation failed (" + std::string(e.what()) + ")", j);
    }
  }
  if (mode == TriangulationMode::Single) X2 = transform_pose(relative_transform(cam2, cam1), X1, cam2.id);
  return {std::move(X1), std::move(X2)};
}

}  // namespace cvpose
