#pragma once

#include <string_view>
#include <utility>

#include <Eigen/Core>

#include "cvpose/camera.hpp"

namespace cvpose {

/// Which of the two cameras serves as the world origin for a DLT solve.
enum class OriginView { First, Second };

/// `Dual` solves the DLT once per origin camera; `Single` solves in the first
/// camera's frame and maps the result into the second.
enum class TriangulationMode { Dual, Single };

TriangulationMode parse_triangulation_mode(std::string_view text);
std::string_view to_string(TriangulationMode mode);

struct TriangulationTolerances {
  double min_baseline_mm = 1e-6;
  double singular_gap = 1e-12;
};

/// Linear two-view triangulation of one joint.
///
/// The origin camera gets projection K[I|0], the other K[R|t] with (R, t) the
/// transform from the origin camera frame into the other camera frame. The two
/// independent rows of each cross-product constraint u x (P X) = 0 form a 4x4
/// system whose null vector (right singular vector of the least singular
/// value) is de-homogenized. Rows are normalized to unit length before the
/// solve. The point is returned in the origin camera's frame.
Eigen::Vector3d triangulate_joint(const Eigen::Vector2d& u1, const Eigen::Vector2d& u2,
                                  const CameraModel& cam1, const CameraModel& cam2,
                                  OriginView origin = OriginView::First,
                                  const TriangulationTolerances& tol = {});

/// Triangulates every joint. Returns the pose in cam1's frame and in cam2's frame.
/// DegenerateGeometry carries the failing joint index.
std::pair<Pose3D, Pose3D> triangulate_pose(const Pose2D& x1, const Pose2D& x2, const CameraModel& cam1,
                                           const CameraModel& cam2,
                                           TriangulationMode mode = TriangulationMode::Dual,
                                           const TriangulationTolerances& tol = {});

}  // namespace cvpose
