#include "cvpose/rig.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/Geometry>
#include <json.hpp>

namespace cvpose {

using nlohmann::json;

const CameraModel& CameraRig::at(const std::string& id) const {
  for (const auto& cam : cameras) {
    if (cam.id == id) return cam;
  }
  throw InvalidArgument("rig has no camera '" + id + "'");
}

bool CameraRig::contains(const std::string& id) const {
  return std::any_of(cameras.begin(), cameras.end(), [&](const CameraModel& c) { return c.id == id; });
}

namespace {

constexpr double kFocalPx = 1146.0;
constexpr int kImageSize = 1000;
constexpr double kRingRadiusMm = 3000.0;
const Eigen::Vector3d kWorkspaceCenter(0.0, 0.0, 1000.0);

CameraModel look_at(const std::string& id, const Eigen::Vector3d& center, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - center).normalized();
  const Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d y = z.cross(x);
  CameraModel cam;
  cam.id = id;
  cam.R.row(0) = x.transpose();
  cam.R.row(1) = y.transpose();
  cam.R.row(2) = z.transpose();
  cam.t = -(cam.R * center);
  cam.K << kFocalPx, 0.0, kImageSize / 2.0, 0.0, kFocalPx, kImageSize / 2.0, 0.0, 0.0, 1.0;
  cam.width = kImageSize;
  cam.height = kImageSize;
  return cam;
}

template <int N>
std::array<double, N> read_numbers(const json& rec, const char* field, std::size_t line) {
  if (!rec.contains(field)) throw MissingField(field, line);
  const json& arr = rec.at(field);
  if (!arr.is_array() || arr.size() != N) {
    throw SchemaError(std::string("field '") + field + "' must hold " + std::to_string(N) + " numbers", line);
  }
  std::array<double, N> out{};
  for (int i = 0; i < N; ++i) {
    if (!arr[i].is_number()) throw SchemaError(std::string("field '") + field + "' must be numeric", line);
    out[i] = arr[i].get<double>();
  }
  return out;
}

}  // namespace

CameraRig ring_rig(int count, double spacing_deg) {
  CameraRig rig;
  for (int i = 0; i < count; ++i) {
    const double theta = i * spacing_deg * std::numbers::pi / 180.0;
    const Eigen::Vector3d center =
        kWorkspaceCenter + kRingRadiusMm * Eigen::Vector3d(std::sin(theta), -std::cos(theta), 0.0);
    rig.cameras.push_back(look_at("cam" + std::to_string(i), center, kWorkspaceCenter));
  }
  return rig;
}

CameraRig default_rig() { return ring_rig(2, 60.0); }

CameraRig read_rig(std::istream& in) {
  CameraRig rig;
  std::string text;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw SchemaError(std::string("malformed record: ") + e.what(), line_no);
    }
    if (!rec.is_object()) throw SchemaError("record must be an object", line_no);
    if (!header) {
      if (!rec.contains("schema")) throw MissingField("schema", line_no);
      if (rec.at("schema") != "rig-v1") throw SchemaError("unsupported rig schema " + rec.at("schema").dump(), line_no);
      header = true;
      continue;
    }
    CameraModel cam;
    if (!rec.contains("id")) throw MissingField("id", line_no);
    if (!rec.contains("width")) throw MissingField("width", line_no);
    if (!rec.contains("height")) throw MissingField("height", line_no);
    try {
      cam.id = rec.at("id").get<std::string>();
      cam.width = rec.at("width").get<int>();
      cam.height = rec.at("height").get<int>();
    } catch (const json::exception& e) {
      throw SchemaError(std::string("bad camera field: ") + e.what(), line_no);
    }
    const auto K = read_numbers<9>(rec, "K", line_no);
    const auto R = read_numbers<9>(rec, "R", line_no);
    const auto t = read_numbers<3>(rec, "t", line_no);
    for (int i = 0; i < 9; ++i) {
      cam.K(i / 3, i % 3) = K[i];
      cam.R(i / 3, i % 3) = R[i];
    }
    cam.t = Eigen::Vector3d(t[0], t[1], t[2]);
    try {
      cam.validate();
    } catch (const InvalidArgument& e) {
      throw SchemaError(e.what(), line_no);
    }
    if (rig.contains(cam.id)) throw SchemaError("duplicate camera id '" + cam.id + "'", line_no);
    rig.cameras.push_back(std::move(cam));
  }
  if (!header) throw SchemaError("empty rig file");
  return rig;
}

CameraRig load_rig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rig file " + path.string());
  try {
    return read_rig(in);
  } catch (const SchemaError& e) {
    throw SchemaError::in_file(path.string(), e);
  }
}

void write_rig(std::ostream& out, const CameraRig& rig) {
  out << json{{"schema", "rig-v1"}}.dump() << '\n';
  for (const auto& cam : rig.cameras) {
    json rec;
    rec["id"] = cam.id;
    const Eigen::Matrix3d Kt = cam.K.transpose();
    rec["K"] = std::vector<double>(Kt.data(), Kt.data() + 9);
    const Eigen::Matrix3d Rt = cam.R.transpose();
    rec["R"] = std::vector<double>(Rt.data(), Rt.data() + 9);
    rec["t"] = std::vector<double>(cam.t.data(), cam.t.data() + 3);
    rec["width"] = cam.width;
    rec["height"] = cam.height;
    out << rec.dump() << '\n';
  }
}

void save_rig(const std::filesystem::path& path, const CameraRig& rig) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write rig file " + path.string());
  write_rig(out, rig);
}

}  // namespace cvpose
