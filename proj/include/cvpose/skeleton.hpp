#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cvpose/camera.hpp"

namespace cvpose {

/// Named set of joints pooled into one coarse graph node.
struct BodyGroup {
  std::string name;
  std::vector<int> joints;
};

/// Joints, kinematic tree, bones and left/right pairings of a skeleton.
///
/// Bone k connects child joint bones[k].first to its parent bones[k].second;
/// bones are listed in joint order, skipping the root.
struct SkeletonTopology {
  std::vector<std::string> joint_names;
  std::vector<int> parent;
  int root_index = 0;
  std::vector<std::pair<int, int>> bones;
  std::vector<std::pair<int, int>> left_right_joint_pairs;
  /// (left bone index, right bone index).
  std::vector<std::pair<int, int>> left_right_bone_pairs;
  std::vector<BodyGroup> groups;
  /// Left/right pairs of group indices.
  std::vector<std::pair<int, int>> group_pairs;
  /// Hex FNV-1a of the topo-v1 text the topology was parsed from.
  std::string fingerprint;

  int num_joints() const { return static_cast<int>(joint_names.size()); }
  int num_bones() const { return static_cast<int>(bones.size()); }
  int bone_index_of_child(int joint) const;
};

/// Builds and validates a topology; throws InvalidArgument on a malformed tree,
/// non-involutive left/right pairs, or groups that do not partition the joints.
SkeletonTopology make_topology(std::vector<std::string> joint_names, std::vector<int> parent,
                               std::vector<std::pair<int, int>> left_right_joint_pairs,
                               std::vector<BodyGroup> groups = {},
                               std::vector<std::pair<int, int>> group_pairs = {});

/// topo-v1 text of the embedded 17-joint Human3.6M-style skeleton.
std::string_view default_topology_text();
SkeletonTopology default_topology();

SkeletonTopology parse_topology(std::string_view text);
SkeletonTopology load_topology(const std::filesystem::path& path);

/// b_k = X[child_k] - X[parent_k], one row per bone.
Eigen::Matrix<double, Eigen::Dynamic, 3> bone_vectors(const Joints3D& X, const SkeletonTopology& topo);

/// Bones x joints matrix S with S * X == bone_vectors(X).
Eigen::MatrixXd bone_incidence(const SkeletonTopology& topo);

}  // namespace cvpose
