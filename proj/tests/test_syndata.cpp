#include <doctest.h>

#include <sstream>

#include "cvpose/losses.hpp"
#include "cvpose/rig.hpp"
#include "cvpose/syndata.hpp"
#include "cvpose/training.hpp"
#include "cvpose/triangulation.hpp"

using namespace cvpose;

namespace {

SyntheticConfig small_config(int n, std::uint64_t seed = 3) {
  SyntheticConfig c;
  c.n_samples = n;
  c.seed = seed;
  return c;
}

std::string serialized(const Dataset& d) {
  std::ostringstream out;
  write_dataset(out, d);
  return out.str();
}

double mean_triangulation_error(const SyntheticOutput& out) {
  double total = 0.0;
  for (const Sample& s : out.dataset.samples) {
    const auto [X1, X2] = triangulate_pose(s.detection(0), s.detection(1), out.assumed_rig.at(s.camera_pair[0]),
                                           out.assumed_rig.at(s.camera_pair[1]), TriangulationMode::Dual);
    total += (X1.joints - (*s.joints_3d_gt)[0]).rowwise().norm().mean();
    total += (X2.joints - (*s.joints_3d_gt)[1]).rowwise().norm().mean();
  }
  return total / (2.0 * static_cast<double>(out.dataset.samples.size()));
}

}  // namespace

TEST_CASE("generated bone lengths equal the template") {
  const auto topo = default_topology();
  const SyntheticConfig cfg;
  const Eigen::VectorXd expect = template_bone_lengths(cfg.bones, topo);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Joints3D X = generate_skeleton_pose(cfg, topo, rng);
    for (int k = 0; k < topo.num_bones(); ++k) {
      const double len = (X.row(topo.bones[k].first) - X.row(topo.bones[k].second)).norm();
      CHECK(std::abs(len - expect(k)) < 1e-9);
    }
  }
}

TEST_CASE("template is left-right symmetric and ground truth has zero symmetry loss") {
  const auto topo = default_topology();
  const Eigen::VectorXd len = template_bone_lengths(BoneTemplate{}, topo);
  for (const auto& [l, r] : topo.left_right_bone_pairs) CHECK(len(l) == len(r));

  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Joints3D X = generate_skeleton_pose(SyntheticConfig{}, topo, rng);
    ad::Tape t;
    CHECK(symmetry_loss(t.constant(X), t.constant(X), topo, 1).item() < 1e-9);
  }
}

TEST_CASE("zero angle scale gives the rest pose at a random root") {
  const auto topo = default_topology();
  SyntheticConfig cfg;
  cfg.angle_scale = 0.0;
  std::mt19937_64 rng(3);
  const Joints3D a = generate_skeleton_pose(cfg, topo, rng);
  const Joints3D b = generate_skeleton_pose(cfg, topo, rng);
  // Same shape up to root position and heading: pairwise distances agree.
  for (int i = 0; i < topo.num_joints(); ++i) {
    for (int j = 0; j < topo.num_joints(); ++j) {
      CHECK(std::abs((a.row(i) - a.row(j)).norm() - (b.row(i) - b.row(j)).norm()) < 1e-9);
    }
  }
  CHECK((a.row(0) - b.row(0)).norm() > 1e-6);
  for (int d = 0; d < 3; ++d) {
    CHECK(a(0, d) >= cfg.workspace_min(d));
    CHECK(a(0, d) <= cfg.workspace_max(d));
  }
}

TEST_CASE("clean 2D is the exact projection of the ground truth") {
  const auto out = generate_dataset(small_config(50), default_rig(), default_topology());
  REQUIRE(out.dataset.samples.size() == 50);
  const CameraRig rig = default_rig();
  for (const Sample& s : out.dataset.samples) {
    REQUIRE(s.joints_3d_gt.has_value());
    for (int v = 0; v < 2; ++v) {
      const CameraModel& cam = rig.at(s.camera_pair[static_cast<std::size_t>(v)]);
      const Pose2D p = project(cam, s.ground_truth(v));
      CHECK(p.joints == s.joints_2d_clean[static_cast<std::size_t>(v)]);
      CHECK((p.joints.array() >= 0.0).all());
      CHECK((p.joints.col(0).array() < cam.width).all());
      CHECK((p.joints.col(1).array() < cam.height).all());
    }
  }
}

TEST_CASE("noise-free data with exact calibration triangulates to the ground truth") {
  SyntheticConfig cfg = small_config(200);
  cfg.sigma_px = 0.0;
  const auto out = generate_dataset(cfg, default_rig(), default_topology());
  double worst = 0.0;
  for (const Sample& s : out.dataset.samples) {
    const auto [X1, X2] = triangulate_pose(s.detection(0), s.detection(1), out.assumed_rig.at(s.camera_pair[0]),
                                           out.assumed_rig.at(s.camera_pair[1]), TriangulationMode::Dual);
    worst = std::max(worst, (X1.joints - (*s.joints_3d_gt)[0]).rowwise().norm().maxCoeff());
    worst = std::max(worst, (X2.joints - (*s.joints_3d_gt)[1]).rowwise().norm().maxCoeff());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("same seed gives byte-identical datasets and manifests") {
  const auto a = generate_dataset(small_config(100, 9), default_rig(), default_topology());
  const auto b = generate_dataset(small_config(100, 9), default_rig(), default_topology());
  CHECK(serialized(a.dataset) == serialized(b.dataset));
  CHECK(a.manifest == b.manifest);
  const auto c = generate_dataset(small_config(100, 10), default_rig(), default_topology());
  CHECK(serialized(a.dataset) != serialized(c.dataset));
  CHECK(a.manifest != c.manifest);
}

TEST_CASE("pixel noise has the configured standard deviation") {
  SyntheticConfig cfg = small_config(400);
  cfg.sigma_px = 5.0;
  const auto out = generate_dataset(cfg, default_rig(), default_topology());
  double sum = 0.0, sq = 0.0;
  long n = 0;
  for (const Sample& s : out.dataset.samples) {
    for (int v = 0; v < 2; ++v) {
      const Joints2D d = s.joints_2d[static_cast<std::size_t>(v)] - s.joints_2d_clean[static_cast<std::size_t>(v)];
      sum += d.sum();
      sq += d.squaredNorm();
      n += d.size();
    }
  }
  REQUIRE(n >= 10000);
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  CHECK(std::abs(sd - 5.0) < 0.03 * 5.0);
}

TEST_CASE("triangulation error roughly doubles from 2.5 to 5 px") {
  SyntheticConfig cfg = small_config(300);
  cfg.sigma_px = 2.5;
  const double low = mean_triangulation_error(generate_dataset(cfg, default_rig(), default_topology()));
  cfg.sigma_px = 5.0;
  const double high = mean_triangulation_error(generate_dataset(cfg, default_rig(), default_topology()));
  CHECK(high > low);
  CHECK(high / low == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("calibration perturbation has the requested size and is shared across seeds") {
  const CameraRig rig = default_rig();
  const CameraRig p = perturb_rig(rig, 0.2, 5.0, 4);
  CHECK(p.cameras[0].R == rig.cameras[0].R);
  CHECK(p.cameras[0].t == rig.cameras[0].t);
  const Eigen::Matrix3d dR = p.cameras[1].R * rig.cameras[1].R.transpose();
  const double angle = std::acos(std::clamp((dR.trace() - 1.0) / 2.0, -1.0, 1.0)) * 180.0 / M_PI;
  CHECK(angle == doctest::Approx(0.2).epsilon(1e-6));
  CHECK((p.cameras[1].center() - rig.cameras[1].center()).norm() == doctest::Approx(5.0).epsilon(1e-9));

  SyntheticConfig a = small_config(5, 1), b = small_config(5, 2);
  a.perturb_rot_deg = b.perturb_rot_deg = 0.2;
  a.perturb_trans_mm = b.perturb_trans_mm = 5.0;
  const auto ra = generate_dataset(a, rig, default_topology()).assumed_rig;
  const auto rb = generate_dataset(b, rig, default_topology()).assumed_rig;
  CHECK(ra.cameras[1].R == rb.cameras[1].R);
  CHECK(ra.cameras[1].t == rb.cameras[1].t);
}

TEST_CASE("poses that cannot fit the image raise PoseOutOfView") {
  SyntheticConfig cfg = small_config(3);
  cfg.workspace_min = Eigen::Vector3d(5000.0, 5000.0, 900.0);
  cfg.workspace_max = Eigen::Vector3d(5100.0, 5100.0, 1000.0);
  cfg.max_attempts = 5;
  CHECK_THROWS_AS(generate_dataset(cfg, default_rig(), default_topology()), PoseOutOfView);
}

TEST_CASE("dataset save/load round trip") {
  const auto out = generate_dataset(small_config(20), default_rig(), default_topology());
  const std::string text = serialized(out.dataset);
  std::istringstream in(text);
  const Dataset back = read_dataset(in, 17);
  REQUIRE(back.samples.size() == out.dataset.samples.size());
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    const Sample& a = out.dataset.samples[i];
    const Sample& b = back.samples[i];
    CHECK(a.sample_id == b.sample_id);
    CHECK(a.camera_pair == b.camera_pair);
    CHECK(a.joints_2d == b.joints_2d);
    CHECK(a.joints_2d_clean == b.joints_2d_clean);
    REQUIRE(b.joints_3d_gt.has_value());
    CHECK(*a.joints_3d_gt == *b.joints_3d_gt);
  }
  CHECK(serialized(back) == text);
}

TEST_CASE("dataset without ground truth loads and prepares for training") {
  const auto out = generate_dataset(small_config(10), default_rig(), default_topology());
  const std::string text = serialized(strip_ground_truth(out.dataset));
  CHECK(text.find("joints_3d_gt") == std::string::npos);
  std::istringstream in(text);
  const Dataset back = read_dataset(in, 17);
  CHECK(!back.samples[0].joints_3d_gt.has_value());
  const PreparedSet prepared = prepare_samples(back.samples, out.assumed_rig, TriangulationMode::Dual);
  CHECK(prepared.samples.size() == 10);
}

TEST_CASE("dataset reader rejects malformed input with line numbers") {
  const auto out = generate_dataset(small_config(3), default_rig(), default_topology());
  const std::string text = serialized(out.dataset);

  SUBCASE("truncated line") {
    const std::size_t second = text.find('\n', text.find('\n') + 1);
    std::istringstream in(text.substr(0, second + 40));
    try {
      read_dataset(in, 17);
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("unknown schema version") {
    std::string bad = text;
    bad.replace(bad.find("data-v1"), 7, "data-v9");
    std::istringstream in(bad);
    CHECK_THROWS_AS(read_dataset(in, 17), SchemaError);
  }
  SUBCASE("joint count differs from the topology") {
    std::istringstream in(text);
    CHECK_THROWS_AS(read_dataset(in, 16), SchemaError);
  }
  SUBCASE("missing field") {
    std::string bad = text;
    const std::size_t at = bad.find("\"joints_2d_clean\"");
    bad.replace(at, 17, "\"joints_2d_other\"");
    std::istringstream in(bad);
    try {
      read_dataset(in, 17);
      FAIL("expected MissingField");
    } catch (const MissingField& e) {
      CHECK(std::string(e.what()).find("joints_2d_clean") != std::string::npos);
    }
  }
}

TEST_CASE("synthetic config text round trip and unknown keys") {
  SyntheticConfig c = small_config(77, 5);
  c.sigma_px = 2.5;
  c.perturb_rot_deg = 0.2;
  c.perturb_trans_mm = 5.0;
  c.camera_pairs = {{"cam0", "cam1"}, {"cam1", "cam2"}};
  const SyntheticConfig back = parse_synthetic_config(to_text(c));
  CHECK(to_text(back) == to_text(c));
  CHECK(back.n_samples == 77);
  CHECK(back.camera_pairs.size() == 2);
  CHECK_THROWS_AS(parse_synthetic_config("n_samples = 3\nbogus = 1\n"), SchemaError);
}
