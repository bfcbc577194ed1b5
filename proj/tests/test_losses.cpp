#include <doctest.h>

#include <random>

#include "cvpose/losses.hpp"
#include "cvpose/rig.hpp"
#include "cvpose/syndata.hpp"
#include "cvpose/training.hpp"
#include "test_support.hpp"

using namespace cvpose;
using cvpose::ad::Matrix;
using cvpose::ad::Tape;
using cvpose::ad::Value;
using cvpose::testing::random_matrix;
using cvpose::testing::to_camera;

namespace {

// A symmetric skeleton seen by the default rig, with exact annotations.
struct Scene {
  SkeletonTopology topo = default_topology();
  CameraRig rig = default_rig();
  Joints3D world;
  Joints3D X1, X2;
  Joints2D y1, y2;
  ViewPairGeometry geometry;

  explicit Scene(std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    world = generate_skeleton_pose(SyntheticConfig{}, topo, rng);
    set_world(world);
    geometry = pair_geometry(rig.cameras[0], rig.cameras[1]);
  }

  void set_world(const Joints3D& w) {
    world = w;
    X1 = to_camera(rig.cameras[0], w).joints;
    X2 = to_camera(rig.cameras[1], w).joints;
    y1 = project(rig.cameras[0], {X1, rig.cameras[0].id}).joints;
    y2 = project(rig.cameras[1], {X2, rig.cameras[1].id}).joints;
  }

  LossBatch batch() const { return {1, y1, y2, {geometry}}; }
};

double reprojection_oracle(const Joints3D& X, const Joints2D& y, const Eigen::Matrix3d& K) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < X.rows(); ++j) {
    const Eigen::Vector3d p = K * X.row(j).transpose();
    s += (Eigen::Vector2d(p(0) / p(2), p(1) / p(2)) - y.row(j).transpose()).norm();
  }
  return s;
}

double transform_oracle(const Joints3D& X1, const Joints3D& X2, const RigidTransform& T12) {
  const RigidTransform T21 = T12.inverse();
  double s = 0.0;
  for (Eigen::Index j = 0; j < X1.rows(); ++j) {
    const Eigen::Vector3d a = X1.row(j).transpose(), b = X2.row(j).transpose();
    s += (a - T12 * b).norm() + (b - T21 * a).norm();
  }
  return s;
}

double bone_oracle(const Joints3D& X1, const Joints3D& X2, const RigidTransform& T12, const SkeletonTopology& topo) {
  double s = 0.0;
  for (const auto& [child, parent] : topo.bones) {
    const Eigen::Vector3d b1 = (X1.row(child) - X1.row(parent)).transpose();
    const Eigen::Vector3d b2 = (X2.row(child) - X2.row(parent)).transpose();
    const Eigen::Vector3d b12 = T12.R * b2, b21 = T12.R.transpose() * b1;
    s += 1.0 - b1.dot(b12) / (b1.norm() * b12.norm());
    s += 1.0 - b2.dot(b21) / (b2.norm() * b21.norm());
  }
  return s;
}

double symmetry_oracle(const Joints3D& X, const SkeletonTopology& topo) {
  double s = 0.0;
  for (const auto& [l, r] : topo.left_right_bone_pairs) {
    const auto len = [&](int k) { return (X.row(topo.bones[k].first) - X.row(topo.bones[k].second)).norm(); };
    s += std::abs(len(l) - len(r));
  }
  return s;
}

LossBreakdown evaluate(const Joints3D& X1, const Joints3D& X2, const LossBatch& batch, const SkeletonTopology& topo,
                       const LossOptions& options = {}) {
  Tape t;
  return compute_losses(t.constant(X1), t.constant(X2), batch, topo, options).breakdown;
}

// Moves `child` and its whole subtree by `delta`.
void shift_subtree(Joints3D& X, const SkeletonTopology& topo, int child, const Eigen::RowVector3d& delta) {
  for (int j = 0; j < topo.num_joints(); ++j) {
    int a = j;
    while (a != child && a != topo.root_index) a = topo.parent[a];
    if (a == child) X.row(j) += delta;
  }
}

}  // namespace

TEST_CASE("consistent pose pair gives every loss below 1e-9") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Scene s(seed);
    const LossBreakdown b = evaluate(s.X1, s.X2, s.batch(), s.topo);
    CHECK(b.reprojection < 1e-9);
    CHECK(b.symmetry < 1e-9);
    CHECK(b.transform_consistency < 1e-9);
    CHECK(b.bone_direction < 1e-9);
    CHECK(b.total < 1e-9);
  }
}

TEST_CASE("reprojection: a (3,4) pixel offset on one joint costs 5") {
  Scene s;
  s.y1.row(5) += Eigen::RowVector2d(3.0, 4.0);
  Tape t;
  const double r = reprojection_loss(t.constant(s.X1), t.constant(s.X2), s.batch()).item();
  CHECK(r == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("reprojection matches a direct per-joint evaluation") {
  std::mt19937_64 rng(11);
  Scene s;
  const Joints3D X1 = s.X1 + random_matrix(rng, 17, 3, -40.0, 40.0);
  const Joints3D X2 = s.X2 + random_matrix(rng, 17, 3, -40.0, 40.0);
  Tape t;
  const double r = reprojection_loss(t.constant(X1), t.constant(X2), s.batch()).item();
  const double oracle =
      reprojection_oracle(X1, s.y1, s.geometry.K1) + reprojection_oracle(X2, s.y2, s.geometry.K2);
  CHECK(r == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("reprojection names view and joint for a point behind the camera") {
  Scene s;
  Joints3D X2 = s.X2;
  X2(4, 2) = -10.0;
  Tape t;
  try {
    reprojection_loss(t.constant(s.X1), t.constant(X2), s.batch());
    FAIL("expected NonPositiveDepth");
  } catch (const NonPositiveDepth& e) {
    CHECK(e.joint() == 4);
    CHECK(std::string(e.what()).find("view 2") != std::string::npos);
  }
}

TEST_CASE("symmetry: 300 mm vs 250 mm upper arms in both views give 100") {
  SyntheticConfig cfg;
  cfg.bones.upper_arm = 300.0;
  Scene s;
  std::mt19937_64 rng(5);
  Joints3D w = generate_skeleton_pose(cfg, s.topo, rng);
  const int r_elbow = 15, r_shoulder = 14;
  const Eigen::RowVector3d dir = (w.row(r_elbow) - w.row(r_shoulder)).normalized();
  shift_subtree(w, s.topo, r_elbow, -50.0 * dir);
  s.set_world(w);
  Tape t;
  const double v = symmetry_loss(t.constant(s.X1), t.constant(s.X2), s.topo, 1).item();
  CHECK(v == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(v == doctest::Approx(symmetry_oracle(s.X1, s.topo) + symmetry_oracle(s.X2, s.topo)).epsilon(1e-12));
}

TEST_CASE("transform consistency: unit offset on all 17 joints gives 34") {
  Scene s;
  Joints3D X1 = s.X1;
  X1.rowwise() += Eigen::RowVector3d(1.0, 0.0, 0.0);
  Tape t;
  const double v = transform_consistency_loss(t.constant(X1), t.constant(s.X2), {s.geometry}).item();
  CHECK(v == doctest::Approx(34.0).epsilon(1e-9));
  const double doubled = transform_consistency_loss(t.constant(X1), t.constant(s.X2), {s.geometry}, true).item();
  CHECK(doubled == doctest::Approx(68.0).epsilon(1e-9));
}

TEST_CASE("transform consistency matches a direct evaluation and is rigidly invariant") {
  std::mt19937_64 rng(12);
  Scene s;
  const Joints3D X1 = s.X1 + random_matrix(rng, 17, 3, -30.0, 30.0);
  const Joints3D X2 = s.X2 + random_matrix(rng, 17, 3, -30.0, 30.0);
  Tape t;
  const double v = transform_consistency_loss(t.constant(X1), t.constant(X2), {s.geometry}).item();
  CHECK(v == doctest::Approx(transform_oracle(X1, X2, s.geometry.T12)).epsilon(1e-12));

  // Re-express view 1 in another frame G; T12 becomes G * T12.
  const RigidTransform G{cvpose::testing::random_rotation(rng), Eigen::Vector3d(100.0, -50.0, 20.0)};
  const Joints3D X1g = transform_pose(G, {X1, "a"}).joints;
  ViewPairGeometry g = s.geometry;
  g.T12 = compose(G, s.geometry.T12);
  const double moved = transform_consistency_loss(t.constant(X1g), t.constant(X2), {g}).item();
  CHECK(moved == doctest::Approx(v).epsilon(1e-10));
}

TEST_CASE("bone direction: orthogonal and anti-parallel bones") {
  Scene s;
  const int head = 10, neck = 9;
  const Eigen::Vector3d bone = (s.X1.row(head) - s.X1.row(neck)).transpose();
  const Eigen::Vector3d axis = bone.unitOrthogonal();

  Joints3D X1 = s.X1;
  X1.row(head) = X1.row(neck) + (axis_angle(axis, M_PI / 2) * bone).transpose();
  Tape t;
  const double ortho = bone_direction_loss(t.constant(X1), t.constant(s.X2), {s.geometry}, s.topo).item();
  CHECK(ortho == doctest::Approx(2.0).epsilon(1e-9));

  // Reversed in view 1 only: each directional term sees cos = -1.
  X1.row(head) = X1.row(neck) - bone.transpose();
  const double anti = bone_direction_loss(t.constant(X1), t.constant(s.X2), {s.geometry}, s.topo).item();
  CHECK(anti == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("bone direction matches a direct evaluation and ignores zero-length bones") {
  std::mt19937_64 rng(13);
  Scene s;
  const Joints3D X1 = s.X1 + random_matrix(rng, 17, 3, -50.0, 50.0);
  const Joints3D X2 = s.X2 + random_matrix(rng, 17, 3, -50.0, 50.0);
  Tape t;
  const double v = bone_direction_loss(t.constant(X1), t.constant(X2), {s.geometry}, s.topo).item();
  CHECK(v == doctest::Approx(bone_oracle(X1, X2, s.geometry.T12, s.topo)).epsilon(1e-12));

  Joints3D collapsed = s.X1;
  collapsed.row(10) = collapsed.row(9);
  const double z = bone_direction_loss(t.constant(collapsed), t.constant(s.X2), {s.geometry}, s.topo).item();
  CHECK(std::isfinite(z));
  CHECK(z < 1e-9);
}

TEST_CASE("total loss: default weights on parts (10, 2, 4, 5) give 16.5") {
  Tape t;
  const auto c = [&](double v) { return t.constant(Matrix::Constant(1, 1, v)); };
  const WeightedLoss w = total_loss({c(10), c(2), c(4), c(5)}, LossWeights{});
  CHECK(w.total.item() == 16.5);
  CHECK(w.breakdown.total == 16.5);
  CHECK(total_loss({c(0), c(0), c(0), c(0)}, LossWeights{}).total.item() == 0.0);
  CHECK_THROWS_AS(total_loss({c(1), c(1), c(1), t.constant(Matrix::Zero(2, 1))}, LossWeights{}), NotScalar);
  LossWeights bad;
  bad.symmetry = -1.0;
  CHECK_THROWS_AS(total_loss({c(1), c(1), c(1), c(1)}, bad), InvalidArgument);
}

TEST_CASE("breakdown total equals the weighted parts to 1e-12") {
  std::mt19937_64 rng(14);
  Scene s;
  for (int trial = 0; trial < 20; ++trial) {
    const Joints3D X1 = s.X1 + random_matrix(rng, 17, 3, -60.0, 60.0);
    const Joints3D X2 = s.X2 + random_matrix(rng, 17, 3, -60.0, 60.0);
    LossOptions opt;
    opt.weights = {0.3 + trial * 0.1, 1.7, 0.9, 0.1};
    for (const LossWeights& w : {LossWeights{}, opt.weights}) {
      opt.weights = w;
      const LossBreakdown b = evaluate(X1, X2, s.batch(), s.topo, opt);
      const double expect = w.reprojection * b.reprojection + w.symmetry * b.symmetry +
                            w.transform * b.transform_consistency + w.bone_direction * b.bone_direction;
      CHECK(std::abs(b.total - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("losses are non-negative and bone direction is bounded") {
  std::mt19937_64 rng(15);
  Scene s;
  for (int trial = 0; trial < 50; ++trial) {
    const Joints3D X1 = s.X1 + random_matrix(rng, 17, 3, -300.0, 300.0);
    const Joints3D X2 = s.X2 + random_matrix(rng, 17, 3, -300.0, 300.0);
    const LossBreakdown b = evaluate(X1, X2, s.batch(), s.topo);
    CHECK(b.reprojection >= 0.0);
    CHECK(b.symmetry >= 0.0);
    CHECK(b.transform_consistency >= 0.0);
    CHECK(b.bone_direction >= 0.0);
    CHECK(b.bone_direction <= 4.0 * s.topo.num_bones());
  }
}

TEST_CASE("scaling both poses scales symmetry and transform, leaves bone direction") {
  std::mt19937_64 rng(16);
  Scene s;
  const Joints3D X1 = s.X1 + random_matrix(rng, 17, 3, -50.0, 50.0);
  const Joints3D X2 = s.X2 + random_matrix(rng, 17, 3, -50.0, 50.0);
  for (double k : {0.5, 2.0, 3.7}) {
    ViewPairGeometry g = s.geometry;
    g.T12.t *= k;
    Tape t;
    const Value a1 = t.constant(X1), a2 = t.constant(X2);
    const Value b1 = t.constant(k * X1), b2 = t.constant(k * X2);
    CHECK(symmetry_loss(b1, b2, s.topo, 1).item() ==
          doctest::Approx(k * symmetry_loss(a1, a2, s.topo, 1).item()).epsilon(1e-12));
    CHECK(transform_consistency_loss(b1, b2, {g}).item() ==
          doctest::Approx(k * transform_consistency_loss(a1, a2, {s.geometry}).item()).epsilon(1e-12));
    CHECK(bone_direction_loss(b1, b2, {g}, s.topo).item() ==
          doctest::Approx(bone_direction_loss(a1, a2, {s.geometry}, s.topo).item()).epsilon(1e-10));
  }
}

TEST_CASE("losses are per-sample means over the batch") {
  std::mt19937_64 rng(17);
  Scene s;
  const Joints3D X1 = s.X1 + random_matrix(rng, 17, 3, -50.0, 50.0);
  const Joints3D X2 = s.X2 + random_matrix(rng, 17, 3, -50.0, 50.0);
  const LossBreakdown one = evaluate(X1, X2, s.batch(), s.topo);
  Joints3D X1x2(34, 3), X2x2(34, 3);
  X1x2 << X1, X1;
  X2x2 << X2, X2;
  Joints2D y1(34, 2), y2(34, 2);
  y1 << s.y1, s.y1;
  y2 << s.y2, s.y2;
  const LossBreakdown two = evaluate(X1x2, X2x2, {2, y1, y2, {s.geometry, s.geometry}}, s.topo);
  CHECK(two.total == doctest::Approx(one.total).epsilon(1e-12));
  CHECK(two.bone_direction == doctest::Approx(one.bone_direction).epsilon(1e-12));
}

TEST_CASE("every loss passes a gradient check") {
  std::mt19937_64 rng(18);
  Scene s;
  const Joints3D X1 = s.X1 + random_matrix(rng, 17, 3, -50.0, 50.0);
  const Joints3D X2 = s.X2 + random_matrix(rng, 17, 3, -50.0, 50.0);
  const LossBatch batch = s.batch();
  ad::GradCheckOptions opts;
  opts.samples = 30;
  opts.eps = 1e-4;

  using Fn = std::function<Value(const Value&, const Value&)>;
  const std::vector<std::pair<const char*, Fn>> losses{
      {"reprojection", [&](const Value& a, const Value& b) { return reprojection_loss(a, b, batch); }},
      {"symmetry", [&](const Value& a, const Value& b) { return symmetry_loss(a, b, s.topo, 1); }},
      {"transform", [&](const Value& a, const Value& b) { return transform_consistency_loss(a, b, {s.geometry}); }},
      {"bone direction", [&](const Value& a, const Value& b) { return bone_direction_loss(a, b, {s.geometry}, s.topo); }},
      {"total", [&](const Value& a, const Value& b) { return compute_losses(a, b, batch, s.topo).total; }},
  };
  for (const auto& [name, fn] : losses) {
    const auto rep = ad::grad_check([&](Tape&, const std::vector<Value>& p) { return fn(p[0], p[1]); }, {X1, X2}, opts);
    INFO(name << " max rel error " << rep.max_rel_error);
    CHECK(rep.passed);
    CHECK(rep.checked >= 10);
  }
}

TEST_CASE("gradient of the total is the weighted sum of part gradients") {
  std::mt19937_64 rng(19);
  Scene s;
  const Joints3D X1 = s.X1 + random_matrix(rng, 17, 3, -50.0, 50.0);
  const Joints3D X2 = s.X2 + random_matrix(rng, 17, 3, -50.0, 50.0);
  const LossWeights w{0.7, 1.3, 0.4, 2.5};

  const auto grads = [&](const std::function<Value(const Value&, const Value&)>& fn) {
    Tape t;
    const Value a = t.leaf(X1), b = t.leaf(X2);
    t.backward(fn(a, b));
    return std::make_pair(Matrix(a.grad()), Matrix(b.grad()));
  };
  LossOptions opt;
  opt.weights = w;
  const auto total = grads([&](const Value& a, const Value& b) { return compute_losses(a, b, s.batch(), s.topo, opt).total; });
  const auto r = grads([&](const Value& a, const Value& b) { return reprojection_loss(a, b, s.batch()); });
  const auto sy = grads([&](const Value& a, const Value& b) { return symmetry_loss(a, b, s.topo, 1); });
  const auto tr = grads([&](const Value& a, const Value& b) { return transform_consistency_loss(a, b, {s.geometry}); });
  const auto bd = grads([&](const Value& a, const Value& b) { return bone_direction_loss(a, b, {s.geometry}, s.topo); });
  const Matrix g1 = w.reprojection * r.first + w.symmetry * sy.first + w.transform * tr.first + w.bone_direction * bd.first;
  const Matrix g2 =
      w.reprojection * r.second + w.symmetry * sy.second + w.transform * tr.second + w.bone_direction * bd.second;
  CHECK((total.first - g1).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((total.second - g2).cwiseAbs().maxCoeff() < 1e-10);
}
