#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cvpose/camera.hpp"

namespace cvpose {

/// One two-view observation. Index 0/1 follow camera_pair.
struct Sample {
  std::string sample_id;
  std::array<std::string, 2> camera_pair;
  /// Detections fed to triangulation (possibly noisy), pixels.
  std::array<Joints2D, 2> joints_2d;
  /// Annotations used by the reprojection loss, pixels.
  std::array<Joints2D, 2> joints_2d_clean;
  /// Ground truth in each camera's frame; evaluation only.
  std::optional<std::array<Joints3D, 2>> joints_3d_gt;

  Pose2D detection(int view) const { return {joints_2d[static_cast<std::size_t>(view)], camera_pair[static_cast<std::size_t>(view)]}; }
  Pose3D ground_truth(int view) const;
};

struct Dataset {
  int num_joints = 0;
  std::vector<Sample> samples;
};

/// data-v1: JSON Lines. A header line {"schema":"data-v1","num_joints":J}
/// followed by one sample per line.
void write_dataset(std::ostream& out, const Dataset& data);
/// Throws SchemaError (with line number) or MissingField. When expected_joints
/// is positive the header's joint count must match it.
Dataset read_dataset(std::istream& in, int expected_joints = -1);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path, int expected_joints = -1);

/// Copy without ground truth, as a weakly-supervised consumer would receive it.
Dataset strip_ground_truth(Dataset data);

}  // namespace cvpose
