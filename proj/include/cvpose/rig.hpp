#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cvpose/camera.hpp"

namespace cvpose {

/// Calibrated cameras addressed by id.
struct CameraRig {
  std::vector<CameraModel> cameras;

  const CameraModel& at(const std::string& id) const;
  bool contains(const std::string& id) const;
};

/// Default two-camera rig: 3 m from the workspace center, 60 degrees apart,
/// focal 1146 px, 1000x1000 images, optical axes horizontal at 1 m height.
CameraRig default_rig();

/// `count` cameras on a 3 m circle around the workspace center spaced
/// `spacing_deg` apart, sharing the default intrinsics.
CameraRig ring_rig(int count, double spacing_deg);

// rig-v1: a header line {"schema":"rig-v1"} followed by one JSON camera
// object per line: {"id","K":[9],"R":[9],"t":[3],"width","height"}.
CameraRig read_rig(std::istream& in);
CameraRig load_rig(const std::filesystem::path& path);
void write_rig(std::ostream& out, const CameraRig& rig);
void save_rig(const std::filesystem::path& path, const CameraRig& rig);

}  // namespace cvpose
