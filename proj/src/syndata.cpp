#include "cvpose/syndata.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "cvpose/checkpoint.hpp"
#include "cvpose/hash.hpp"
#include "cvpose/kvconfig.hpp"

namespace cvpose {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct BoneSpec {
  const char* child;
  Eigen::Vector3d direction;
  double BoneTemplate::*length;
  BoneLimits limits;
};

// Left-side and midline limits; right-side bones mirror their left partner.
const std::vector<BoneSpec>& bone_specs() {
  static const std::vector<BoneSpec> specs = {
      {"RHip", {-1, 0, 0}, &BoneTemplate::hip, {{-5, 5}, {-5, 5}, {-10, 10}}},
      {"RKnee", {0, 0, -1}, &BoneTemplate::thigh, {{-30, 95}, {-40, 10}, {-20, 20}}},
      {"RAnkle", {0, 0, -1}, &BoneTemplate::shin, {{-120, 0}, {0, 0}, {0, 0}}},
      {"LHip", {1, 0, 0}, &BoneTemplate::hip, {{-5, 5}, {-5, 5}, {-10, 10}}},
      {"LKnee", {0, 0, -1}, &BoneTemplate::thigh, {{-30, 95}, {-40, 10}, {-20, 20}}},
      {"LAnkle", {0, 0, -1}, &BoneTemplate::shin, {{-120, 0}, {0, 0}, {0, 0}}},
      {"Spine", {0, 0, 1}, &BoneTemplate::spine, {{-30, 10}, {-15, 15}, {-25, 25}}},
      {"Thorax", {0, 0, 1}, &BoneTemplate::thorax, {{-20, 10}, {-10, 10}, {-20, 20}}},
      {"Neck", {0, 0, 1}, &BoneTemplate::neck, {{-20, 20}, {-15, 15}, {-30, 30}}},
      {"Head", {0, 0, 1}, &BoneTemplate::head, {{-20, 20}, {-10, 10}, {0, 0}}},
      {"LShoulder", {1, 0, 0}, &BoneTemplate::shoulder, {{-10, 10}, {-10, 10}, {-10, 10}}},
      {"LElbow", {0, 0, -1}, &BoneTemplate::upper_arm, {{-60, 150}, {-150, 10}, {-40, 40}}},
      {"LWrist", {0, 0, -1}, &BoneTemplate::forearm, {{0, 140}, {0, 0}, {-30, 30}}},
      {"RShoulder", {-1, 0, 0}, &BoneTemplate::shoulder, {{-10, 10}, {-10, 10}, {-10, 10}}},
      {"RElbow", {0, 0, -1}, &BoneTemplate::upper_arm, {{-60, 150}, {-150, 10}, {-40, 40}}},
      {"RWrist", {0, 0, -1}, &BoneTemplate::forearm, {{0, 140}, {0, 0}, {-30, 30}}},
  };
  return specs;
}

const BoneLimits kRootLimits{{-10, 10}, {-5, 5}, {-180, 180}};

void require_default_skeleton(const SkeletonTopology& topo) {
  const SkeletonTopology ref = default_topology();
  if (topo.joint_names != ref.joint_names || topo.parent != ref.parent) {
    throw InvalidArgument("synthetic generator supports only the default 17-joint skeleton");
  }
}

const BoneSpec& spec_for(const SkeletonTopology& topo, int bone) {
  const std::string& child = topo.joint_names[static_cast<std::size_t>(topo.bones[static_cast<std::size_t>(bone)].first)];
  for (const auto& s : bone_specs()) {
    if (child == s.child) return s;
  }
  throw InvalidArgument("no synthetic bone spec for joint '" + child + "'");
}

bool is_right(const std::string& name) { return !name.empty() && name[0] == 'R'; }

double draw(const AngleRange& r, double scale, std::mt19937_64& rng) {
  const double lo = r.lo * scale;
  const double hi = r.hi * scale;
  if (hi <= lo) return lo * kDeg;
  return std::uniform_real_distribution<double>(lo, hi)(rng) * kDeg;
}

Eigen::Matrix3d local_rotation(const BoneLimits& lim, double scale, std::mt19937_64& rng) {
  const double flex = draw(lim.flex, scale, rng);
  const double side = draw(lim.side, scale, rng);
  const double twist = draw(lim.twist, scale, rng);
  return (Eigen::AngleAxisd(twist, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(side, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(flex, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

bool in_view(const CameraModel& cam, const Joints3D& world) {
  const Joints3D Xc = (world * cam.R.transpose()).rowwise() + cam.t.transpose();
  for (Eigen::Index j = 0; j < Xc.rows(); ++j) {
    if (!(Xc(j, 2) > 1.0)) return false;
    const Eigen::Vector2d u = project_point<double>(cam.K, Xc.row(j).transpose());
    if (!(u.x() >= 0.0 && u.x() < cam.width && u.y() >= 0.0 && u.y() < cam.height)) return false;
  }
  return true;
}

std::string vec_text(const Eigen::Vector3d& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_samples < 0) throw InvalidArgument("n_samples must be >= 0");
  if (!(sigma_px >= 0.0)) throw InvalidArgument("sigma_px must be >= 0");
  if (!(angle_scale >= 0.0)) throw InvalidArgument("angle_scale must be >= 0");
  if (!(perturb_rot_deg >= 0.0) || !(perturb_trans_mm >= 0.0)) throw InvalidArgument("perturbations must be >= 0");
  if ((workspace_max - workspace_min).minCoeff() < 0.0) throw InvalidArgument("workspace_max must be >= workspace_min");
  if (camera_pairs.empty()) throw InvalidArgument("camera_pairs must not be empty");
  for (const auto& p : camera_pairs) {
    if (p[0] == p[1]) throw InvalidArgument("camera pair must name two distinct cameras");
  }
  if (max_attempts < 1) throw InvalidArgument("max_attempts must be >= 1");
}

BoneLimits default_bone_limits(const SkeletonTopology& topo, int bone) {
  const BoneSpec& s = spec_for(topo, bone);
  BoneLimits lim = s.limits;
  if (is_right(s.child)) {
    lim.side = {-s.limits.side.hi, -s.limits.side.lo};
    lim.twist = {-s.limits.twist.hi, -s.limits.twist.lo};
  }
  return lim;
}

Eigen::VectorXd template_bone_lengths(const BoneTemplate& t, const SkeletonTopology& topo) {
  Eigen::VectorXd out(topo.num_bones());
  for (int k = 0; k < topo.num_bones(); ++k) out(k) = t.*(spec_for(topo, k).length);
  return out;
}

Joints3D generate_skeleton_pose(const SyntheticConfig& config, const SkeletonTopology& topo, std::mt19937_64& rng) {
  require_default_skeleton(topo);
  const int J = topo.num_joints();
  std::vector<Eigen::Matrix3d> G(static_cast<std::size_t>(J));
  Joints3D X(J, 3);

  Eigen::Vector3d root;
  for (int a = 0; a < 3; ++a) {
    const double lo = config.workspace_min(a);
    const double hi = config.workspace_max(a);
    root(a) = hi > lo ? std::uniform_real_distribution<double>(lo, hi)(rng) : lo;
  }
  const int r = topo.root_index;
  G[static_cast<std::size_t>(r)] = local_rotation(kRootLimits, config.angle_scale, rng);
  X.row(r) = root.transpose();

  // Parents precede children in the default joint order.
  for (int k = 0; k < topo.num_bones(); ++k) {
    const auto [child, parent] = topo.bones[static_cast<std::size_t>(k)];
    const BoneSpec& s = spec_for(topo, k);
    const Eigen::Matrix3d L = local_rotation(default_bone_limits(topo, k), config.angle_scale, rng);
    G[static_cast<std::size_t>(child)] = G[static_cast<std::size_t>(parent)] * L;
    const Eigen::Vector3d offset = config.bones.*(s.length) * s.direction;
    X.row(child) = X.row(parent) + (G[static_cast<std::size_t>(child)] * offset).transpose();
  }
  return X;
}

CameraRig perturb_rig(const CameraRig& rig, double rot_deg, double trans_mm, std::uint64_t seed) {
  CameraRig out = rig;
  std::mt19937_64 rng(mix_seed(seed ^ 0x63616c6962ull));
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 1; i < out.cameras.size(); ++i) {
    Eigen::Vector3d axis(n(rng), n(rng), n(rng));
    Eigen::Vector3d shift(n(rng), n(rng), n(rng));
    axis.normalize();
    shift.normalize();
    const Eigen::Matrix3d dR = Eigen::AngleAxisd(rot_deg * kDeg, axis).toRotationMatrix();
    CameraModel& cam = out.cameras[i];
    // Error applied in the camera's own frame: X' = dR (R X + t) + dt.
    cam.R = dR * cam.R;
    cam.t = dR * cam.t + trans_mm * shift;
  }
  return out;
}

SyntheticOutput generate_dataset(const SyntheticConfig& config, const CameraRig& true_rig, const SkeletonTopology& topo) {
  config.validate();
  require_default_skeleton(topo);
  if (true_rig.cameras.size() < 2) throw InvalidArgument("synthetic data needs a rig with at least 2 cameras");
  for (const auto& p : config.camera_pairs) {
    for (const auto& id : p) {
      if (!true_rig.contains(id)) throw InvalidArgument("camera pair names unknown camera '" + id + "'");
    }
  }

  SyntheticOutput out;
  out.dataset.num_joints = topo.num_joints();
  out.assumed_rig = perturb_rig(true_rig, config.perturb_rot_deg, config.perturb_trans_mm, config.calibration_seed);
  const std::uint64_t base = mix_seed(config.seed);
  for (int i = 0; i < config.n_samples; ++i) {
    std::mt19937_64 rng(mix_seed(base ^ static_cast<std::uint64_t>(i)));
    const auto& pair = config.camera_pairs[static_cast<std::size_t>(i) % config.camera_pairs.size()];
    const CameraModel& c1 = true_rig.at(pair[0]);
    const CameraModel& c2 = true_rig.at(pair[1]);

    Joints3D world;
    bool ok = false;
    for (int attempt = 0; attempt < config.max_attempts && !ok; ++attempt) {
      world = generate_skeleton_pose(config, topo, rng);
      ok = in_view(c1, world) && in_view(c2, world);
    }
    if (!ok) {
      throw PoseOutOfView("sample " + std::to_string(i) + ": no in-view pose after " +
                          std::to_string(config.max_attempts) + " attempts");
    }

    Sample s;
    char id[32];
    std::snprintf(id, sizeof id, "s%06d", i);
    s.sample_id = id;
    s.camera_pair = pair;
    std::array<Joints3D, 2> gt;
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int v = 0; v < 2; ++v) {
      const CameraModel& cam = v == 0 ? c1 : c2;
      gt[static_cast<std::size_t>(v)] = transform_pose(cam.world_to_camera(), Pose3D{world, "world"}, cam.id).joints;
      const Joints2D clean = project(cam, Pose3D{gt[static_cast<std::size_t>(v)], cam.id}).joints;
      Joints2D noisy = clean;
      for (Eigen::Index j = 0; j < noisy.rows(); ++j) {
        for (int a = 0; a < 2; ++a) noisy(j, a) += config.sigma_px * noise(rng);
      }
      s.joints_2d_clean[static_cast<std::size_t>(v)] = clean;
      s.joints_2d[static_cast<std::size_t>(v)] = noisy;
    }
    if (config.include_ground_truth) s.joints_3d_gt = gt;
    out.dataset.samples.push_back(std::move(s));
  }

  std::ostringstream bytes;
  write_dataset(bytes, out.dataset);
  out.manifest = to_text(config) + "content_hash = " + to_hex(fnv1a64(bytes.str())) + "\n";
  return out;
}

SyntheticConfig parse_synthetic_config(const std::string& text) {
  SyntheticConfig c;
  std::map<std::string, double BoneTemplate::*> bone_keys = {
      {"bone.hip", &BoneTemplate::hip},         {"bone.thigh", &BoneTemplate::thigh},
      {"bone.shin", &BoneTemplate::shin},       {"bone.spine", &BoneTemplate::spine},
      {"bone.thorax", &BoneTemplate::thorax},   {"bone.neck", &BoneTemplate::neck},
      {"bone.head", &BoneTemplate::head},       {"bone.shoulder", &BoneTemplate::shoulder},
      {"bone.upper_arm", &BoneTemplate::upper_arm}, {"bone.forearm", &BoneTemplate::forearm}};
  for (const auto& kv : parse_key_values(text)) {
    if (kv.key == "n_samples") {
      c.n_samples = kv_int(kv);
    } else if (kv.key == "seed") {
      c.seed = kv_uint(kv);
    } else if (kv.key == "calibration_seed") {
      c.calibration_seed = kv_uint(kv);
    } else if (kv.key == "workspace_min" || kv.key == "workspace_max") {
      const auto v = kv_doubles(kv);
      if (v.size() != 3) throw SchemaError("key '" + kv.key + "' needs 3 numbers", kv.line);
      (kv.key == "workspace_min" ? c.workspace_min : c.workspace_max) = Eigen::Vector3d(v[0], v[1], v[2]);
    } else if (kv.key == "angle_scale") {
      c.angle_scale = kv_double(kv);
    } else if (kv.key == "sigma_px") {
      c.sigma_px = kv_double(kv);
    } else if (kv.key == "perturb_rot_deg") {
      c.perturb_rot_deg = kv_double(kv);
    } else if (kv.key == "perturb_trans_mm") {
      c.perturb_trans_mm = kv_double(kv);
    } else if (kv.key == "max_attempts") {
      c.max_attempts = kv_int(kv);
    } else if (kv.key == "include_ground_truth") {
      c.include_ground_truth = kv_bool(kv);
    } else if (kv.key == "camera_pairs") {
      c.camera_pairs.clear();
      std::istringstream in(kv.value);
      std::string item;
      while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b == std::string::npos) continue;
        item = item.substr(b, e - b + 1);
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw SchemaError("camera pairs are written a:b", kv.line);
        c.camera_pairs.push_back({item.substr(0, colon), item.substr(colon + 1)});
      }
    } else if (auto it = bone_keys.find(kv.key); it != bone_keys.end()) {
      c.bones.*(it->second) = kv_double(kv);
    } else {
      kv_unknown(kv);
    }
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError(e.what());
  }
  return c;
}

SyntheticConfig load_synthetic_config(const std::filesystem::path& path) {
  try {
    return parse_synthetic_config(read_text_file(path));
  } catch (const SchemaError& e) {
    throw SchemaError::in_file(path.string(), e);
  }
}

std::string to_text(const SyntheticConfig& c) {
  std::ostringstream o;
  o << "n_samples = " << c.n_samples << '\n';
  o << "seed = " << c.seed << '\n';
  o << "calibration_seed = " << c.calibration_seed << '\n';
  o << "workspace_min = " << vec_text(c.workspace_min) << '\n';
  o << "workspace_max = " << vec_text(c.workspace_max) << '\n';
  o << "angle_scale = " << format_double(c.angle_scale) << '\n';
  o << "sigma_px = " << format_double(c.sigma_px) << '\n';
  o << "perturb_rot_deg = " << format_double(c.perturb_rot_deg) << '\n';
  o << "perturb_trans_mm = " << format_double(c.perturb_trans_mm) << '\n';
  o << "max_attempts = " << c.max_attempts << '\n';
  o << "include_ground_truth = " << (c.include_ground_truth ? "true" : "false") << '\n';
  o << "camera_pairs = ";
  for (std::size_t i = 0; i < c.camera_pairs.size(); ++i) o << (i ? ", " : "") << c.camera_pairs[i][0] << ':' << c.camera_pairs[i][1];
  o << '\n';
  const BoneTemplate& b = c.bones;
  o << "bone.hip = " << format_double(b.hip) << '\n' << "bone.thigh = " << format_double(b.thigh) << '\n';
  o << "bone.shin = " << format_double(b.shin) << '\n' << "bone.spine = " << format_double(b.spine) << '\n';
  o << "bone.thorax = " << format_double(b.thorax) << '\n' << "bone.neck = " << format_double(b.neck) << '\n';
  o << "bone.head = " << format_double(b.head) << '\n' << "bone.shoulder = " << format_double(b.shoulder) << '\n';
  o << "bone.upper_arm = " << format_double(b.upper_arm) << '\n' << "bone.forearm = " << format_double(b.forearm) << '\n';
  return o.str();
}

}  // namespace cvpose
