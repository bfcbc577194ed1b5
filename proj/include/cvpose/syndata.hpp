#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cvpose/dataset.hpp"
#include "cvpose/rig.hpp"
#include "cvpose/skeleton.hpp"

namespace cvpose {

/// Degrees.
struct AngleRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Local rotation limits of one bone, applied as Rz(twist) * Ry(side) * Rx(flex)
/// in the body frame (x to the subject's left, y forward, z up).
struct BoneLimits {
  AngleRange flex;
  AngleRange side;
  AngleRange twist;
};

/// Rest-pose bone lengths in millimeters; left and right share one value.
struct BoneTemplate {
  double hip = 130.0;
  double thigh = 450.0;
  double shin = 440.0;
  double spine = 230.0;
  double thorax = 250.0;
  double neck = 110.0;
  double head = 120.0;
  double shoulder = 150.0;
  double upper_arm = 280.0;
  double forearm = 250.0;
};

struct SyntheticConfig {
  int n_samples = 1000;
  std::uint64_t seed = 0;
  /// Root (pelvis) position box, world millimeters.
  Eigen::Vector3d workspace_min{-400.0, -400.0, 850.0};
  Eigen::Vector3d workspace_max{400.0, 400.0, 1050.0};
  BoneTemplate bones;
  /// Multiplies every joint-angle range; 0 gives the rest pose.
  double angle_scale = 1.0;
  /// Gaussian noise on the detection-role 2D joints, pixels.
  double sigma_px = 5.0;
  /// Calibration error of the cameras handed to the triangulator.
  double perturb_rot_deg = 0.0;
  double perturb_trans_mm = 0.0;
  /// Seeds the calibration error separately from the samples, so train and
  /// test sets drawn with different seeds share one miscalibrated rig.
  std::uint64_t calibration_seed = 0;
  /// Samples cycle through these pairs in order.
  std::vector<std::array<std::string, 2>> camera_pairs{{"cam0", "cam1"}};
  /// Draws per sample before giving up on keeping every joint in view.
  int max_attempts = 50;
  bool include_ground_truth = true;

  void validate() const;
};

struct SyntheticOutput {
  Dataset dataset;
  /// Calibration as the triangulator sees it (perturbed).
  CameraRig assumed_rig;
  /// Config echo followed by the dataset content hash.
  std::string manifest;
};

/// Limits for bone k of the default topology, left side; right-side limits
/// mirror the side and twist ranges.
BoneLimits default_bone_limits(const SkeletonTopology& topo, int bone);

/// Forward kinematics from the pelvis: random root position and heading,
/// random joint rotations within the limits, bone lengths from the template.
/// Requires the default 17-joint topology.
Joints3D generate_skeleton_pose(const SyntheticConfig& config, const SkeletonTopology& topo, std::mt19937_64& rng);

/// Rest-pose bone lengths of the template, one per topology bone.
Eigen::VectorXd template_bone_lengths(const BoneTemplate& t, const SkeletonTopology& topo);

/// Copy of the rig with every camera after the first moved by a rotation of
/// exactly rot_deg about a random axis and a translation of exactly trans_mm.
CameraRig perturb_rig(const CameraRig& rig, double rot_deg, double trans_mm, std::uint64_t seed);

/// Throws PoseOutOfView when a sample cannot be kept inside both images
/// within max_attempts draws.
SyntheticOutput generate_dataset(const SyntheticConfig& config, const CameraRig& true_rig,
                                 const SkeletonTopology& topo);

/// Flat key = value text; unknown keys are rejected with the line number.
SyntheticConfig parse_synthetic_config(const std::string& text);
SyntheticConfig load_synthetic_config(const std::filesystem::path& path);
std::string to_text(const SyntheticConfig& config);

}  // namespace cvpose
