#include "cvpose/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cvpose/hash.hpp"
#include "cvpose/kvconfig.hpp"

namespace cvpose {

namespace {

using ad::Matrix;

struct Batch {
  std::vector<const PreparedSample*> samples;
  Matrix X1, X2;
  LossBatch loss;
};

Batch make_batch(std::vector<const PreparedSample*> samples) {
  Batch b;
  b.samples = std::move(samples);
  const auto n = static_cast<Eigen::Index>(b.samples.size());
  const Eigen::Index J = n > 0 ? b.samples.front()->coarse1.rows() : 0;
  b.X1.resize(n * J, 3);
  b.X2.resize(n * J, 3);
  b.loss.blocks = static_cast<int>(n);
  b.loss.y1.resize(n * J, 2);
  b.loss.y2.resize(n * J, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const PreparedSample& s = *b.samples[static_cast<std::size_t>(i)];
    b.X1.middleRows(i * J, J) = s.coarse1;
    b.X2.middleRows(i * J, J) = s.coarse2;
    b.loss.y1.middleRows(i * J, J) = s.y1;
    b.loss.y2.middleRows(i * J, J) = s.y2;
    b.loss.geometry.push_back(s.geometry);
  }
  return b;
}

// Samples whose refined joints all lie in front of both cameras.
std::vector<const PreparedSample*> in_front(const Batch& b, const Matrix& R1, const Matrix& R2, double min_depth) {
  std::vector<const PreparedSample*> keep;
  const Eigen::Index J = b.samples.empty() ? 0 : R1.rows() / static_cast<Eigen::Index>(b.samples.size());
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i) * J;
    if (R1.col(2).segment(r, J).minCoeff() > min_depth && R2.col(2).segment(r, J).minCoeff() > min_depth) {
      keep.push_back(b.samples[i]);
    }
  }
  return keep;
}

LossOptions loss_options(const TrainConfig& c) {
  LossOptions o;
  o.weights = c.loss_weights;
  o.legacy_eq12_double = c.legacy_eq12_double;
  return o;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& x, double w) {
  acc.total += w * x.total;
  acc.reprojection += w * x.reprojection;
  acc.symmetry += w * x.symmetry;
  acc.transform_consistency += w * x.transform_consistency;
  acc.bone_direction += w * x.bone_direction;
}

void divide(LossBreakdown& acc, double n) {
  if (n <= 0.0) return;
  acc.total /= n;
  acc.reprojection /= n;
  acc.symmetry /= n;
  acc.transform_consistency /= n;
  acc.bone_direction /= n;
}

// Forward and loss for one batch. Samples pushed behind a camera by the
// current weights are dropped first; `dropped` counts them.
struct BatchLoss {
  ad::Tape tape;
  std::vector<ad::Value> params;
  WeightedLoss loss;
  int used = 0;
  int dropped = 0;
};

bool run_batch(BatchLoss& out, std::vector<const PreparedSample*> samples, const Model& model, const TrainConfig& config,
               bool trainable) {
  const LossOptions opts = loss_options(config);
  while (!samples.empty()) {
    const Batch b = make_batch(samples);
    out.tape = ad::Tape();
    out.params = bind_weights(out.tape, model.weights, trainable);
    const BoundWeights w(model.weights, out.params);
    const RefinedBatch r =
        forward(out.tape.constant(b.X1, "coarse1"), out.tape.constant(b.X2, "coarse2"), model, w, b.loss.blocks);
    std::vector<const PreparedSample*> keep = in_front(b, r.view1.data(), r.view2.data(), opts.min_depth);
    if (keep.size() == samples.size()) {
      out.loss = compute_losses(r.view1, r.view2, b.loss, model.topology, opts);
      out.used = static_cast<int>(samples.size());
      return true;
    }
    out.dropped += static_cast<int>(samples.size() - keep.size());
    samples = std::move(keep);
  }
  return false;
}

std::string csv_breakdown(const LossBreakdown& l) {
  return format_double(l.total) + "," + format_double(l.reprojection) + "," + format_double(l.symmetry) + "," +
         format_double(l.transform_consistency) + "," + format_double(l.bone_direction);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw InvalidArgument("lr_decay must be in (0, 1]");
  if (!(initial_lr >= 0.0) || !std::isfinite(initial_lr)) throw InvalidArgument("initial_lr must be >= 0");
  if (plateau_epochs < 1) throw InvalidArgument("plateau_epochs must be >= 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw InvalidArgument("val_fraction must be in [0, 1)");
  loss_weights.validate();
  network.validate();
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  for (const auto& kv : parse_key_values(text)) {
    const std::string& k = kv.key;
    if (k == "batch_size") {
      c.batch_size = kv_int(kv);
    } else if (k == "initial_lr") {
      c.initial_lr = kv_double(kv);
    } else if (k == "lr_decay") {
      c.lr_decay = kv_double(kv);
    } else if (k == "plateau_epochs") {
      c.plateau_epochs = kv_int(kv);
    } else if (k == "epochs") {
      c.epochs = kv_int(kv);
    } else if (k == "seed") {
      c.seed = kv_uint(kv);
    } else if (k == "lambda_r") {
      c.loss_weights.reprojection = kv_double(kv);
    } else if (k == "lambda_s") {
      c.loss_weights.symmetry = kv_double(kv);
    } else if (k == "lambda_t") {
      c.loss_weights.transform = kv_double(kv);
    } else if (k == "lambda_b") {
      c.loss_weights.bone_direction = kv_double(kv);
    } else if (k == "legacy_eq12_double") {
      c.legacy_eq12_double = kv_bool(kv);
    } else if (k == "checkpoint_every") {
      c.checkpoint_every = kv_int(kv);
    } else if (k == "val_fraction") {
      c.val_fraction = kv_double(kv);
    } else if (k == "tri_mode") {
      try {
        c.tri_mode = parse_triangulation_mode(kv.value);
      } catch (const InvalidArgument& e) {
        throw SchemaError(e.what(), kv.line);
      }
    } else if (k == "network.channels") {
      c.network.channels = kv_int(kv);
    } else if (k == "network.sgcn_layers") {
      c.network.sgcn_layers = kv_int(kv);
    } else if (k == "network.mgcn_layers_per_stage") {
      c.network.mgcn_layers_per_stage = kv_int(kv);
    } else if (k == "network.coord_scale") {
      c.network.coord_scale = kv_double(kv);
    } else if (k == "network.seed") {
      c.network.seed = kv_uint(kv);
    } else if (k == "network.share_view_weights") {
      c.network.share_view_weights = kv_bool(kv);
    } else if (k == "network.variant") {
      try {
        c.network.variant = parse_model_variant(kv.value);
      } catch (const InvalidArgument& e) {
        throw SchemaError(e.what(), kv.line);
      }
    } else if (k == "network.fc_hidden") {
      c.network.fc_hidden = kv_int(kv);
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

TrainConfig load_train_config(const std::filesystem::path& path) {
  try {
    return parse_train_config(read_text_file(path));
  } catch (const SchemaError& e) {
    throw SchemaError::in_file(path.string(), e);
  }
}

std::string to_text(const TrainConfig& c) {
  std::ostringstream o;
  o << "batch_size = " << c.batch_size << '\n';
  o << "initial_lr = " << format_double(c.initial_lr) << '\n';
  o << "lr_decay = " << format_double(c.lr_decay) << '\n';
  o << "plateau_epochs = " << c.plateau_epochs << '\n';
  o << "epochs = " << c.epochs << '\n';
  o << "seed = " << c.seed << '\n';
  o << "lambda_r = " << format_double(c.loss_weights.reprojection) << '\n';
  o << "lambda_s = " << format_double(c.loss_weights.symmetry) << '\n';
  o << "lambda_t = " << format_double(c.loss_weights.transform) << '\n';
  o << "lambda_b = " << format_double(c.loss_weights.bone_direction) << '\n';
  o << "legacy_eq12_double = " << (c.legacy_eq12_double ? "true" : "false") << '\n';
  o << "checkpoint_every = " << c.checkpoint_every << '\n';
  o << "val_fraction = " << format_double(c.val_fraction) << '\n';
  o << "tri_mode = " << to_string(c.tri_mode) << '\n';
  o << "network.channels = " << c.network.channels << '\n';
  o << "network.sgcn_layers = " << c.network.sgcn_layers << '\n';
  o << "network.mgcn_layers_per_stage = " << c.network.mgcn_layers_per_stage << '\n';
  o << "network.coord_scale = " << format_double(c.network.coord_scale) << '\n';
  o << "network.seed = " << c.network.seed << '\n';
  o << "network.share_view_weights = " << (c.network.share_view_weights ? "true" : "false") << '\n';
  o << "network.variant = " << to_string(c.network.variant) << '\n';
  o << "network.fc_hidden = " << c.network.fc_hidden << '\n';
  return o.str();
}

ViewPairGeometry pair_geometry(const CameraModel& cam1, const CameraModel& cam2) {
  ViewPairGeometry g;
  g.K1 = cam1.K;
  g.K2 = cam2.K;
  g.T12 = relative_transform(cam1, cam2);
  return g;
}

PreparedSample prepare_sample(const Sample& s, const CameraRig& rig, TriangulationMode mode,
                              const TriangulationTolerances& tol) {
  const CameraModel& c1 = rig.at(s.camera_pair[0]);
  const CameraModel& c2 = rig.at(s.camera_pair[1]);
  PreparedSample p;
  p.sample_id = s.sample_id;
  p.camera_pair = s.camera_pair;
  auto [X1, X2] = triangulate_pose(s.detection(0), s.detection(1), c1, c2, mode, tol);
  p.coarse1 = std::move(X1.joints);
  p.coarse2 = std::move(X2.joints);
  p.y1 = s.joints_2d_clean[0];
  p.y2 = s.joints_2d_clean[1];
  p.geometry = pair_geometry(c1, c2);
  return p;
}

PreparedSet prepare_samples(const std::vector<Sample>& samples, const CameraRig& rig, TriangulationMode mode,
                            const TriangulationTolerances& tol) {
  PreparedSet out;
  out.samples.reserve(samples.size());
  for (const auto& s : samples) {
    try {
      out.samples.push_back(prepare_sample(s, rig, mode, tol));
    } catch (const DegenerateGeometry&) {
      out.skipped.push_back(s.sample_id);
    }
  }
  return out;
}

TrainState initial_state(const TrainConfig& config, const SkeletonTopology& topo) {
  config.validate();
  TrainState s;
  s.model = make_model(config.network, topo);
  s.optimizer = AmsgradState::zeros_like(s.model.weights);
  s.lr = config.initial_lr;
  return s;
}

TrainState state_from_checkpoint(const Checkpoint& ckpt, const SkeletonTopology& topo) {
  TrainState s;
  s.model = model_from_checkpoint(ckpt, topo);
  s.optimizer = ckpt.optimizer ? *ckpt.optimizer : AmsgradState::zeros_like(s.model.weights);
  s.schedule = ckpt.schedule;
  s.lr = ckpt.lr;
  s.epoch = ckpt.epoch;
  s.step = ckpt.step;
  s.best_val = ckpt.best_val;
  return s;
}

Checkpoint checkpoint_from_state(const TrainState& s) {
  Checkpoint c = checkpoint_from_model(s.model);
  c.step = s.step;
  c.epoch = s.epoch;
  c.lr = s.lr;
  c.schedule = s.schedule;
  c.best_val = s.best_val;
  c.optimizer = s.optimizer;
  return c;
}

EpochStats train_epoch(const std::vector<PreparedSample>& train, TrainState& state, const TrainConfig& config,
                       const StepCallback& on_step) {
  if (train.empty()) throw InvalidArgument("train_epoch: empty training set");
  EpochStats stats;
  stats.epoch = state.epoch + 1;
  stats.lr = state.lr;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(config.seed ^ (static_cast<std::uint64_t>(stats.epoch) * 0x9e3779b97f4a7c15ull)));
  std::shuffle(order.begin(), order.end(), rng);

  double weight = 0.0;
  const auto B = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0; start < order.size(); start += B) {
    std::vector<const PreparedSample*> samples;
    for (std::size_t i = start; i < std::min(order.size(), start + B); ++i) samples.push_back(&train[order[i]]);
    BatchLoss bl;
    const bool ok = run_batch(bl, std::move(samples), state.model, config, true);
    stats.skipped += bl.dropped;
    if (!ok) continue;
    bl.tape.backward(bl.loss.total);
    std::vector<Matrix> grads;
    grads.reserve(bl.params.size());
    for (const auto& p : bl.params) grads.push_back(p.grad());
    amsgrad_step(state.model.weights, grads, state.optimizer, state.lr);
    ++state.step;
    ++stats.batches;
    accumulate(stats.loss, bl.loss.breakdown, bl.used);
    weight += bl.used;
    if (on_step) on_step(StepRecord{state.step, bl.loss.breakdown, state.lr});
  }
  divide(stats.loss, weight);
  return stats;
}

LossBreakdown evaluate_loss(const std::vector<PreparedSample>& samples, const Model& model, const TrainConfig& config) {
  LossBreakdown acc;
  double weight = 0.0;
  const auto B = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0; start < samples.size(); start += B) {
    std::vector<const PreparedSample*> batch;
    for (std::size_t i = start; i < std::min(samples.size(), start + B); ++i) batch.push_back(&samples[i]);
    BatchLoss bl;
    if (!run_batch(bl, std::move(batch), model, config, false)) continue;
    accumulate(acc, bl.loss.breakdown, bl.used);
    weight += bl.used;
  }
  divide(acc, weight);
  return acc;
}

std::vector<std::pair<Joints3D, Joints3D>> refine_all(const std::vector<PreparedSample>& samples, const Model& model,
                                                      int batch_size) {
  std::vector<std::pair<Joints3D, Joints3D>> out;
  out.reserve(samples.size());
  const int J = model.topology.num_joints();
  const auto B = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < samples.size(); start += B) {
    std::vector<const PreparedSample*> batch;
    for (std::size_t i = start; i < std::min(samples.size(), start + B); ++i) batch.push_back(&samples[i]);
    const Batch b = make_batch(batch);
    ad::Tape tape;
    const BoundWeights w(model.weights, bind_weights(tape, model.weights, false));
    const RefinedBatch r = forward(tape.constant(b.X1), tape.constant(b.X2), model, w, b.loss.blocks);
    for (int i = 0; i < b.loss.blocks; ++i) {
      out.emplace_back(unstack_pose(r.view1.data(), i, J), unstack_pose(r.view2.data(), i, J));
    }
  }
  return out;
}

FitResult fit(const std::vector<PreparedSample>& train, const std::vector<PreparedSample>& val,
              const TrainConfig& config, const SkeletonTopology& topo, const FitOptions& options) {
  config.validate();
  FitResult result;
  result.state = options.resume ? state_from_checkpoint(*options.resume, topo) : initial_state(config, topo);
  TrainState& state = result.state;
  result.best_weights = state.model.weights;

  const bool write = !options.out_dir.empty();
  std::ofstream epoch_log, step_log;
  if (write) {
    std::filesystem::create_directories(options.out_dir);
    const auto mode = options.resume ? std::ios::app : std::ios::trunc;
    epoch_log.open(options.out_dir / "train_log.csv", std::ios::out | mode);
    step_log.open(options.out_dir / "steps.csv", std::ios::out | mode);
    if (!epoch_log || !step_log) throw IoError("cannot write training logs in " + options.out_dir.string());
    if (!options.resume) {
      epoch_log << "epoch,loss,reproj,sym,transform,bonedir,lr,skipped\n";
      step_log << "step,total,r,s,t,b,lr\n";
    }
  }
  auto save = [&](const std::string& name, const Checkpoint& c) {
    if (write) save_checkpoint(options.out_dir / name, c);
  };
  const auto selection_loss = [&] { return evaluate_loss(val.empty() ? train : val, state.model, config).total; };
  if (!options.resume) {
    state.best_val = selection_loss();
    save("best.ckpt", checkpoint_from_state(state));
  }

  StepCallback on_step;
  if (write) {
    on_step = [&](const StepRecord& r) {
      step_log << r.step << ',' << csv_breakdown(r.loss) << ',' << format_double(r.lr) << '\n';
    };
  }

  while (state.epoch < config.epochs) {
    EpochStats stats = train_epoch(train, state, config, on_step);
    state.epoch = stats.epoch;
    if (state.schedule.observe(stats.loss.total, config.plateau_epochs)) state.lr *= config.lr_decay;

    const double val_loss = selection_loss();
    if (val_loss < state.best_val) {
      state.best_val = val_loss;
      result.best_weights = state.model.weights;
      save("best.ckpt", checkpoint_from_state(state));
    }
    if (write) {
      epoch_log << stats.epoch << ',' << csv_breakdown(stats.loss) << ',' << format_double(stats.lr) << ','
                << stats.skipped << '\n';
      epoch_log.flush();
    }
    if (config.checkpoint_every > 0 && stats.epoch % config.checkpoint_every == 0) {
      save("epoch_" + std::to_string(stats.epoch) + ".ckpt", checkpoint_from_state(state));
    }
    result.history.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
  }
  save("last.ckpt", checkpoint_from_state(state));
  return result;
}

std::pair<std::vector<PreparedSample>, std::vector<PreparedSample>> split_validation(std::vector<PreparedSample> all,
                                                                                     double val_fraction) {
  const auto n = all.size();
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = n > 0 ? n - 1 : 0;
  std::vector<PreparedSample> val(std::make_move_iterator(all.end() - static_cast<std::ptrdiff_t>(n_val)),
                                  std::make_move_iterator(all.end()));
  all.resize(n - n_val);
  return {std::move(all), std::move(val)};
}

}  // namespace cvpose
