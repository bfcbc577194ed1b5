#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "cvpose/checkpoint.hpp"
#include "cvpose/rig.hpp"
#include "cvpose/syndata.hpp"
#include "cvpose/training.hpp"
#include "test_support.hpp"

using namespace cvpose;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  SkeletonTopology topo = default_topology();
  SyntheticOutput data;
  std::vector<PreparedSample> samples;

  explicit Fixture(int n, bool strip = false) {
    SyntheticConfig c;
    c.n_samples = n;
    c.seed = 21;
    c.perturb_rot_deg = 0.2;
    c.perturb_trans_mm = 5.0;
    data = generate_dataset(c, default_rig(), topo);
    Dataset d = strip ? strip_ground_truth(data.dataset) : data.dataset;
    samples = prepare_samples(d.samples, data.assumed_rig, TriangulationMode::Dual).samples;
  }
};

TrainConfig small_train_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 2;
  c.seed = 5;
  c.initial_lr = 1e-4;
  c.network.channels = 8;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cvpose_test_" + name);
  fs::remove_all(p);
  return p;
}

bool same_weights(const Weights& a, const Weights& b) {
  if (a.names != b.names) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.tensors[i].rows() != b.tensors[i].rows() || a.tensors[i].cols() != b.tensors[i].cols()) return false;
    if (a.tensors[i] != b.tensors[i]) return false;
  }
  return true;
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("AMSGrad first step with unit gradient") {
  Weights w;
  w.names = {"a"};
  w.tensors = {Eigen::MatrixXd::Constant(2, 3, 0.5)};
  AmsgradState s = AmsgradState::zeros_like(w);
  amsgrad_step(w, {Eigen::MatrixXd::Ones(2, 3)}, s, 1e-3);
  // m = 0.1, v = 0.001, no bias correction.
  const double expect = 0.5 - 1e-3 * 0.1 / (std::sqrt(0.001) + 1e-8);
  CHECK(w.tensors[0](0, 0) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(w.tensors[0](0, 0) - 0.5 == doctest::Approx(-0.00316).epsilon(1e-3));
  CHECK(s.step == 1);
}

TEST_CASE("AMSGrad leaves parameters alone on zero gradients and checks shapes") {
  Weights w;
  w.names = {"a", "b"};
  w.tensors = {Eigen::MatrixXd::Constant(2, 2, 1.5), Eigen::MatrixXd::Constant(1, 4, -2.0)};
  const Weights before = w;
  AmsgradState s = AmsgradState::zeros_like(w);
  amsgrad_step(w, {Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(1, 4)}, s, 1e-3);
  CHECK(same_weights(w, before));
  CHECK_THROWS_AS(amsgrad_step(w, {Eigen::MatrixXd::Zero(2, 2)}, s, 1e-3), ShapeMismatch);
  CHECK_THROWS_AS(amsgrad_step(w, {Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(4, 1)}, s, 1e-3), ShapeMismatch);
}

TEST_CASE("AMSGrad matches a scalar recurrence and keeps vhat monotone") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Weights w;
  w.names = {"a"};
  w.tensors = {Eigen::MatrixXd::Zero(3, 3)};
  AmsgradState s = AmsgradState::zeros_like(w);
  Eigen::ArrayXXd theta = Eigen::ArrayXXd::Zero(3, 3), m = theta, v = theta, vhat = theta;
  for (int step = 0; step < 100; ++step) {
    Eigen::MatrixXd g(3, 3);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng) * (step % 7 == 0 ? 10.0 : 1.0);
    const Eigen::MatrixXd vhat_before = s.vhat.tensors[0];
    amsgrad_step(w, {g}, s, 2e-3);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double gi = g.data()[i];
      m.data()[i] = 0.9 * m.data()[i] + 0.1 * gi;
      v.data()[i] = 0.999 * v.data()[i] + 0.001 * gi * gi;
      vhat.data()[i] = std::max(vhat.data()[i], v.data()[i]);
      theta.data()[i] -= 2e-3 * m.data()[i] / (std::sqrt(vhat.data()[i]) + 1e-8);
    }
    CHECK((s.vhat.tensors[0].array() >= vhat_before.array()).all());
    CHECK((s.vhat.tensors[0].array() >= s.v.tensors[0].array()).all());
    CHECK((s.v.tensors[0].array() >= 0.0).all());
  }
  CHECK((w.tensors[0].array() - theta).abs().maxCoeff() < 1e-14);
}

TEST_CASE("plateau schedule") {
  CHECK(lr_schedule({5, 4, 3, 2, 1}, 1e-3, 0.9, 10) == 1e-3);
  std::vector<double> h{1.0};
  for (int i = 0; i < 9; ++i) h.push_back(1.0 + i);
  CHECK(lr_schedule(h, 1e-3, 0.9, 10) == 1e-3);
  h.push_back(2.0);
  CHECK(lr_schedule(h, 1e-3, 0.9, 10) == doctest::Approx(9e-4).epsilon(1e-15));

  PlateauSchedule s;
  double lr = 1e-3;
  s.observe(1.0, 10);
  for (int i = 0; i < 20; ++i) {
    if (s.observe(2.0, 10)) lr *= 0.9;
  }
  CHECK(lr == doctest::Approx(8.1e-4).epsilon(1e-15));
}

TEST_CASE("train config text round trip and validation") {
  TrainConfig c = small_train_config();
  c.loss_weights.bone_direction = 0.25;
  c.legacy_eq12_double = true;
  c.tri_mode = TriangulationMode::Single;
  c.network.variant = ModelVariant::NoCrossView;
  const TrainConfig back = parse_train_config(to_text(c));
  CHECK(to_text(back) == to_text(c));
  CHECK(back.network.channels == 8);
  CHECK(back.loss_weights.bone_direction == 0.25);

  const TrainConfig d = parse_train_config("");
  CHECK(d.batch_size == 256);
  CHECK(d.initial_lr == 1e-3);
  CHECK(d.lr_decay == 0.9);
  CHECK(d.plateau_epochs == 10);
  CHECK(d.loss_weights.reprojection == 1.0);
  CHECK(d.loss_weights.symmetry == 1.0);
  CHECK(d.loss_weights.transform == 1.0);
  CHECK(d.loss_weights.bone_direction == 0.1);

  CHECK_THROWS_AS(parse_train_config("batch_size = 0\n"), SchemaError);
  CHECK_THROWS_AS(parse_train_config("lr_decay = 1.5\n"), SchemaError);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS(parse_train_config("mystery = 1\n"), SchemaError);
}

TEST_CASE("zero learning rate reproduces the triangulation baseline loss") {
  Fixture f(48);
  TrainConfig c = small_train_config();
  c.initial_lr = 0.0;
  TrainState s = initial_state(c, f.topo);
  const Weights before = s.model.weights;
  const LossBreakdown baseline = evaluate_loss(f.samples, s.model, c);
  const EpochStats e = train_epoch(f.samples, s, c);
  CHECK(same_weights(s.model.weights, before));
  CHECK(e.loss.total == doctest::Approx(baseline.total).epsilon(1e-12));
  CHECK(e.batches == 3);
  CHECK(e.skipped == 0);
}

TEST_CASE("training epochs are bitwise deterministic") {
  Fixture f(40);
  const TrainConfig c = small_train_config();
  TrainState a = initial_state(c, f.topo), b = initial_state(c, f.topo);
  const EpochStats ea = train_epoch(f.samples, a, c);
  const EpochStats eb = train_epoch(f.samples, b, c);
  CHECK(ea.loss.total == eb.loss.total);
  CHECK(same_weights(a.model.weights, b.model.weights));

  TrainConfig other = c;
  other.seed = 6;
  TrainState o = initial_state(other, f.topo);
  train_epoch(f.samples, o, other);
  CHECK(!same_weights(a.model.weights, o.model.weights));
}

TEST_CASE("training reads no ground truth") {
  Fixture f(32, true);
  for (const auto& s : f.samples) CHECK(s.coarse1.rows() == 17);
  const FitResult r = fit(f.samples, {}, small_train_config(), f.topo);
  CHECK(r.history.size() == 2);
  CHECK(std::isfinite(r.history.back().loss.total));
}

TEST_CASE("fit with zero epochs returns the initialization") {
  Fixture f(16);
  TrainConfig c = small_train_config();
  c.epochs = 0;
  const fs::path dir = scratch_dir("zero_epochs");
  const FitResult r = fit(f.samples, {}, c, f.topo, {dir, std::nullopt, {}});
  const Model init = make_model(c.network, f.topo);
  CHECK(same_weights(r.best_weights, init.weights));
  CHECK(same_weights(load_checkpoint(dir / "last.ckpt").weights, init.weights));
  CHECK(same_weights(load_checkpoint(dir / "best.ckpt").weights, init.weights));
  CHECK(count_lines(dir / "train_log.csv") == 1);
  fs::remove_all(dir);
}

TEST_CASE("fit writes one log line per epoch and checkpoints at the cadence") {
  Fixture f(32);
  TrainConfig c = small_train_config();
  c.epochs = 3;
  c.checkpoint_every = 2;
  const fs::path dir = scratch_dir("logs");
  const auto [train, val] = split_validation(f.samples, 0.25);
  CHECK(train.size() == 24);
  CHECK(val.size() == 8);
  CHECK(val.front().sample_id == f.samples[24].sample_id);
  fit(train, val, c, f.topo, {dir, std::nullopt, {}});
  CHECK(count_lines(dir / "train_log.csv") == 1 + 3);
  std::ifstream log(dir / "train_log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "epoch,loss,reproj,sym,transform,bonedir,lr,skipped");
  CHECK(count_lines(dir / "steps.csv") == 1 + 3 * 2);
  CHECK(fs::exists(dir / "epoch_2.ckpt"));
  CHECK(!fs::exists(dir / "epoch_1.ckpt"));
  CHECK(fs::exists(dir / "best.ckpt"));
  CHECK(fs::exists(dir / "last.ckpt"));
  fs::remove_all(dir);
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  Fixture f(40);
  TrainConfig c = small_train_config();
  c.epochs = 3;
  const FitResult full = fit(f.samples, {}, c, f.topo);

  TrainConfig first = c;
  first.epochs = 2;
  const FitResult part = fit(f.samples, {}, first, f.topo);
  std::stringstream buf;
  write_checkpoint(buf, checkpoint_from_state(part.state));
  const Checkpoint ckpt = read_checkpoint(buf);
  const FitResult resumed = fit(f.samples, {}, c, f.topo, {{}, ckpt, {}});

  REQUIRE(resumed.history.size() == 1);
  CHECK(std::abs(resumed.history[0].loss.total - full.history[2].loss.total) <= 1e-12);
  CHECK(same_weights(resumed.state.model.weights, full.state.model.weights));
  CHECK(resumed.state.step == full.state.step);
}

TEST_CASE("optimizer state round-trips through a checkpoint exactly") {
  Fixture f(16);
  TrainConfig c = small_train_config();
  c.epochs = 1;
  const FitResult r = fit(f.samples, {}, c, f.topo);
  std::stringstream buf;
  write_checkpoint(buf, checkpoint_from_state(r.state));
  const TrainState back = state_from_checkpoint(read_checkpoint(buf), f.topo);
  CHECK(same_weights(back.optimizer.m, r.state.optimizer.m));
  CHECK(same_weights(back.optimizer.v, r.state.optimizer.v));
  CHECK(same_weights(back.optimizer.vhat, r.state.optimizer.vhat));
  CHECK(back.optimizer.step == r.state.optimizer.step);
  CHECK(back.lr == r.state.lr);
  CHECK(back.epoch == 1);
}

TEST_SUITE("dynamics") {

TEST_CASE("one default-config epoch on 512 samples ends below the first batch loss") {
  Fixture f(512);
  TrainConfig c;
  c.batch_size = 64;
  TrainState s = initial_state(c, f.topo);
  std::vector<double> losses;
  train_epoch(f.samples, s, c, [&](const StepRecord& r) { losses.push_back(r.loss.total); });
  REQUIRE(losses.size() == 8);
  MESSAGE("first batch " << losses.front() << ", last batch " << losses.back());
  CHECK(losses.back() < losses.front());
}

}  // TEST_SUITE
