#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "cvpose/evaluation.hpp"
#include "cvpose/hash.hpp"
#include "cvpose/syndata.hpp"
#include "test_support.hpp"

using namespace cvpose;
namespace fs = std::filesystem;

namespace {

struct Scene {
  SkeletonTopology topo = default_topology();
  SyntheticOutput data;

  explicit Scene(int n, std::uint64_t seed = 9) {
    SyntheticConfig c;
    c.n_samples = n;
    c.seed = seed;
    c.perturb_rot_deg = 0.2;
    c.perturb_trans_mm = 5.0;
    data = generate_dataset(c, default_rig(), topo);
  }
};

NetworkConfig small_net() {
  NetworkConfig n;
  n.channels = 8;
  return n;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cvpose_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int count(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (auto at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + needle.size())) ++n;
  return n;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CVPOSE_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("mpjpe of a 3-4-5 offset is 5") {
  Joints3D a = Joints3D::Zero(17, 3), b = Joints3D::Zero(17, 3);
  b.col(0).setConstant(3.0);
  b.col(1).setConstant(4.0);
  CHECK(mpjpe(a, b) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(mpjpe(Pose3D{a, "cam0"}, Pose3D{b, "cam0"}) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("mpjpe matches a per-joint loop") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Joints3D a = testing::random_world_pose(rng), b = testing::random_world_pose(rng);
    double sum = 0.0;
    for (int j = 0; j < 17; ++j) {
      const double dx = a(j, 0) - b(j, 0), dy = a(j, 1) - b(j, 1), dz = a(j, 2) - b(j, 2);
      sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    CHECK(mpjpe(a, b) == doctest::Approx(sum / 17.0).epsilon(1e-13));
  }
}

TEST_CASE("metrics reject mismatched frames and joint counts") {
  const Joints3D a = Joints3D::Zero(17, 3);
  CHECK_THROWS_AS(mpjpe(Pose3D{a, "cam0"}, Pose3D{a, "cam1"}), FrameMismatch);
  CHECK_THROWS_AS(p_mpjpe(Pose3D{a, "cam0"}, Pose3D{a, "world"}), FrameMismatch);
  CHECK_THROWS_AS(mpjpe(a, Joints3D::Zero(16, 3)), ShapeMismatch);
}

TEST_CASE("p_mpjpe removes similarity transforms and never exceeds mpjpe") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> scale(0.5, 2.0), shift(-500.0, 500.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Joints3D gt = testing::random_world_pose(rng);
    const Eigen::Matrix3d R = testing::random_rotation(rng);
    Joints3D moved = scale(rng) * gt * R.transpose();
    moved.rowwise() += Eigen::RowVector3d(shift(rng), shift(rng), shift(rng));
    CHECK(p_mpjpe(moved, gt) < 1e-8);

    const Joints3D other = testing::random_world_pose(rng);
    CHECK(p_mpjpe(other, gt) <= mpjpe(other, gt) + 1e-9);
  }
}

TEST_CASE("aggregate recomputes means of the per-sample values") {
  EvalReport r;
  r.samples.push_back({"a", {"cam0", "cam1"}, 10.0, 8.0, 6.0, 4.0});
  r.samples.push_back({"b", {"cam0", "cam1"}, 20.0, 12.0, 8.0, 2.0});
  aggregate(r);
  CHECK(r.mpjpe_tri_mm == 15.0);
  CHECK(r.mpjpe_refined_mm == 10.0);
  CHECK(r.pmpjpe_tri_mm == 7.0);
  CHECK(r.pmpjpe_refined_mm == 3.0);
}

TEST_CASE("an untrained model reports identical triangulated and refined errors") {
  Scene s(40);
  const Model model = make_model(small_net(), s.topo);
  const EvalReport r = evaluate_model(model, s.data.dataset.samples, s.data.assumed_rig, TriangulationMode::Dual);
  REQUIRE(r.samples.size() == 40);
  CHECK(r.mpjpe_tri_mm > 0.0);
  CHECK(r.mpjpe_refined_mm == r.mpjpe_tri_mm);
  CHECK(r.pmpjpe_refined_mm == r.pmpjpe_tri_mm);
  CHECK(r.parameter_count == model.weights.count());

  const std::string text = format_report(r);
  CHECK(text.rfind("schema = report-v1\n", 0) == 0);
  CHECK(text.find("mpjpe_tri_mm = ") != std::string::npos);
  CHECK(text.find("[per_sample]") != std::string::npos);
}

TEST_CASE("evaluation needs ground truth") {
  Scene s(4);
  const Dataset stripped = strip_ground_truth(s.data.dataset);
  const Model model = make_model(small_net(), s.topo);
  CHECK_THROWS_AS(evaluate_model(model, stripped.samples, s.data.assumed_rig, TriangulationMode::Dual), MissingField);
}

TEST_CASE("noise robustness rows") {
  Scene s(30);
  const Model model = make_model(small_net(), s.topo);
  const auto rows =
      run_noise_robustness(model, s.data.dataset.samples, s.data.assumed_rig, TriangulationMode::Dual, {0, 5, 10, 20}, 3);
  REQUIRE(rows.size() == 4);
  const EvalReport base = evaluate_model(model, s.data.dataset.samples, s.data.assumed_rig, TriangulationMode::Dual);
  CHECK(rows[0].mpjpe_coarse == base.mpjpe_tri_mm);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    // The untrained network is the identity map.
    CHECK(rows[k].pmpjpe_refined == rows[k].pmpjpe_coarse);
    if (k > 0) CHECK(rows[k].pmpjpe_coarse > rows[k - 1].pmpjpe_coarse);
  }
  const auto again =
      run_noise_robustness(model, s.data.dataset.samples, s.data.assumed_rig, TriangulationMode::Dual, {0, 5, 10, 20}, 3);
  CHECK(again[3].mpjpe_coarse == rows[3].mpjpe_coarse);
  CHECK_THROWS_AS(run_noise_robustness(model, s.data.dataset.samples, s.data.assumed_rig, TriangulationMode::Dual,
                                       {-1.0}, 3),
                  InvalidArgument);
}

TEST_CASE("ablation without training rows") {
  Scene train(8), test(20, 10);
  TrainConfig c;
  c.network = small_net();
  c.epochs = 0;
  const auto variants = all_ablation_variants();
  CHECK(variants.size() == 6);
  CHECK(variants.front() == "no-refinement");

  const EvalReport base =
      evaluate_model(make_model(c.network, train.topo), test.data.dataset.samples, test.data.assumed_rig, c.tri_mode);
  const auto rows = run_ablation(c, train.data.dataset.samples, test.data.dataset.samples, test.data.assumed_rig,
                                 train.topo, {"no-refinement", "full"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].variant == "no-refinement");
  CHECK(rows[0].mpjpe == base.mpjpe_tri_mm);
  CHECK(rows[0].parameters == 0);
  // Zero epochs leaves the identity initialization in place.
  CHECK(rows[1].mpjpe == base.mpjpe_tri_mm);
  CHECK_THROWS_AS(run_ablation(c, train.data.dataset.samples, test.data.dataset.samples, test.data.assumed_rig,
                               train.topo, {"tiny"}),
                  InvalidArgument);
}

TEST_CASE("svg rendering is deterministic and complete") {
  Scene s(2);
  const PreparedSample p = prepare_sample(s.data.dataset.samples[0], s.data.assumed_rig, TriangulationMode::Dual);
  RenderInput in;
  in.sample = s.data.dataset.samples[0];
  in.rig = &s.data.assumed_rig;
  in.coarse = std::make_pair(p.coarse1, p.coarse2);
  in.refined = std::make_pair(p.coarse1, p.coarse2);
  const std::string a = render_svg(in, s.topo), b = render_svg(in, s.topo);
  CHECK(a == b);
  CHECK(count(a, "<polyline class=\"ground-truth\"") == 16);
  CHECK(count(a, "<polyline class=\"coarse\"") == 16);
  CHECK(count(a, "<polyline class=\"refined\"") == 16);
  CHECK(count(a, "<g") == count(a, "</g>"));
  CHECK(count(a, "<svg") == 1);
  CHECK(a.find("nan") == std::string::npos);
  CHECK(a.find("-0.00") == std::string::npos);

  in.refined.reset();
  CHECK(count(render_svg(in, s.topo), "class=\"refined\"") == 0);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch_dir("cli_codes");
  const fs::path log = dir / "log.txt";
  CHECK(run_cli("", log) == 1);
  CHECK(slurp(log).find("Usage") != std::string::npos);
  CHECK(run_cli("frobnicate", log) == 1);
  CHECK(run_cli("eval --dataset x", log) == 1);
  CHECK(run_cli("--help", log) == 0);
  CHECK(run_cli("eval --checkpoint " + (dir / "missing.ckpt").string() + " --dataset x --rig y", log) == 2);
  CHECK(slurp(log).rfind("error: ", 0) == 0);

  std::ofstream(dir / "bad.jsonl") << "{\"schema\":\"data-v1\",\"num_joints\":17}\n{\"sample_id\":\n";
  CHECK(run_cli("triangulate --dataset " + (dir / "bad.jsonl").string() + " --rig y --out " +
                    (dir / "c.jsonl").string(),
                log) == 2);
}

TEST_CASE("cli pipeline is byte-reproducible and eval leaves its inputs alone") {
  const fs::path dir = scratch_dir("cli_pipeline");
  const fs::path log = dir / "log.txt";
  std::ofstream(dir / "syn.txt") << "n_samples = 24\nseed = 4\nperturb_rot_deg = 0.2\nperturb_trans_mm = 5\n";
  std::ofstream(dir / "train.txt") << "epochs = 1\nbatch_size = 8\nnetwork.channels = 8\n";

  for (const char* run : {"a", "b"}) {
    const fs::path d = dir / run;
    REQUIRE(run_cli("synth --config " + (dir / "syn.txt").string() + " --out " + (d / "data").string(), log) == 0);
    REQUIRE(run_cli("train --dataset " + (d / "data/dataset.jsonl").string() + " --rig " +
                        (d / "data/rig.jsonl").string() + " --config " + (dir / "train.txt").string() + " --out " +
                        (d / "run").string(),
                    log) == 0);
  }
  for (const char* f : {"data/dataset.jsonl", "data/rig.jsonl", "run/best.ckpt", "run/last.ckpt", "run/train_log.csv"}) {
    CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
  }

  const fs::path d = dir / "a";
  const auto digest = [&] {
    std::string all;
    for (const char* f : {"data/dataset.jsonl", "data/rig.jsonl", "run/best.ckpt"}) all += to_hex(fnv1a64(slurp(d / f)));
    return all;
  };
  const std::string before = digest();
  const std::string eval_args = "eval --checkpoint " + (d / "run/best.ckpt").string() + " --dataset " +
                                (d / "data/dataset.jsonl").string() + " --rig " + (d / "data/rig.jsonl").string();
  REQUIRE(run_cli(eval_args + " --out " + (dir / "r1.txt").string(), log) == 0);
  REQUIRE(run_cli(eval_args + " --out " + (dir / "r2.txt").string(), log) == 0);
  CHECK(digest() == before);
  CHECK(slurp(dir / "r1.txt") == slurp(dir / "r2.txt"));
  CHECK(slurp(dir / "r1.txt").find("mpjpe_refined_mm = ") != std::string::npos);

  REQUIRE(run_cli("render --dataset " + (d / "data/dataset.jsonl").string() + " --rig " +
                      (d / "data/rig.jsonl").string() + " --checkpoint " + (d / "run/best.ckpt").string() +
                      " --out " + (dir / "s.svg").string(),
                  log) == 0);
  CHECK(count(slurp(dir / "s.svg"), "<polyline") == 48);
}
