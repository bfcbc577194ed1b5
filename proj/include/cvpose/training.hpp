#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cvpose/checkpoint.hpp"
#include "cvpose/dataset.hpp"
#include "cvpose/losses.hpp"
#include "cvpose/network.hpp"
#include "cvpose/optimizer.hpp"
#include "cvpose/rig.hpp"
#include "cvpose/triangulation.hpp"

namespace cvpose {

struct TrainConfig {
  int batch_size = 256;
  double initial_lr = 1e-3;
  double lr_decay = 0.9;
  int plateau_epochs = 10;
  int epochs = 200;
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  bool legacy_eq12_double = false;
  /// Write a numbered checkpoint every this many epochs; 0 disables.
  int checkpoint_every = 0;
  /// Share of the training file held out for best-checkpoint selection.
  double val_fraction = 0.1;
  TriangulationMode tri_mode = TriangulationMode::Dual;
  NetworkConfig network;

  void validate() const;
};

/// Flat `key = value` text; network fields are spelled `network.<field>` and
/// loss weights `lambda_r`, `lambda_s`, `lambda_t`, `lambda_b`.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string to_text(const TrainConfig& config);

/// Training input derived from one sample: coarse poses from triangulation
/// with the assumed calibration, 2D annotations and view-pair geometry.
/// Ground truth is deliberately absent.
struct PreparedSample {
  std::string sample_id;
  std::array<std::string, 2> camera_pair;
  Joints3D coarse1;
  Joints3D coarse2;
  Joints2D y1;
  Joints2D y2;
  ViewPairGeometry geometry;
};

struct PreparedSet {
  std::vector<PreparedSample> samples;
  /// Ids of samples whose triangulation was degenerate.
  std::vector<std::string> skipped;
};

ViewPairGeometry pair_geometry(const CameraModel& cam1, const CameraModel& cam2);
PreparedSample prepare_sample(const Sample& s, const CameraRig& rig, TriangulationMode mode,
                              const TriangulationTolerances& tol = {});
/// Degenerate samples are counted and left out.
PreparedSet prepare_samples(const std::vector<Sample>& samples, const CameraRig& rig, TriangulationMode mode,
                            const TriangulationTolerances& tol = {});

/// Mutable state of a training run.
struct TrainState {
  Model model;
  AmsgradState optimizer;
  PlateauSchedule schedule;
  double lr = 0.0;
  /// Epochs completed.
  int epoch = 0;
  std::int64_t step = 0;
  double best_val = std::numeric_limits<double>::infinity();
};

TrainState initial_state(const TrainConfig& config, const SkeletonTopology& topo);
TrainState state_from_checkpoint(const Checkpoint& ckpt, const SkeletonTopology& topo);
Checkpoint checkpoint_from_state(const TrainState& state);

struct StepRecord {
  std::int64_t step = 0;
  LossBreakdown loss;
  double lr = 0.0;
};

struct EpochStats {
  int epoch = 0;
  /// Sample-weighted mean over the epoch's batches.
  LossBreakdown loss;
  double lr = 0.0;
  /// Samples dropped because a refined joint fell behind a camera.
  int skipped = 0;
  int batches = 0;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// One pass over `train` in an order shuffled by (seed, epoch), updating the
/// weights after every mini-batch. Does not touch the schedule.
EpochStats train_epoch(const std::vector<PreparedSample>& train, TrainState& state, const TrainConfig& config,
                       const StepCallback& on_step = {});

/// Mean loss of the current weights over `samples`, in batches, without updates.
LossBreakdown evaluate_loss(const std::vector<PreparedSample>& samples, const Model& model, const TrainConfig& config);

/// Refines coarse poses of every sample.
std::vector<std::pair<Joints3D, Joints3D>> refine_all(const std::vector<PreparedSample>& samples, const Model& model,
                                                      int batch_size = 256);

struct FitOptions {
  /// Directory for logs and checkpoints; empty keeps everything in memory.
  std::filesystem::path out_dir;
  /// Continue from this state instead of a fresh initialization.
  std::optional<Checkpoint> resume;
  std::function<void(const EpochStats&)> on_epoch;
};

struct FitResult {
  TrainState state;
  /// Weights with the lowest validation loss (training loss when there is no
  /// validation set), the initialization included.
  Weights best_weights;
  std::vector<EpochStats> history;
};

/// Runs epochs up to config.epochs with the plateau schedule. In out_dir it
/// writes train_log.csv, steps.csv, last.ckpt, best.ckpt and, at the
/// configured cadence, epoch_<n>.ckpt.
FitResult fit(const std::vector<PreparedSample>& train, const std::vector<PreparedSample>& val,
              const TrainConfig& config, const SkeletonTopology& topo, const FitOptions& options = {});

/// Holds out the last round(val_fraction * n) samples, keeping at least one
/// for training.
std::pair<std::vector<PreparedSample>, std::vector<PreparedSample>> split_validation(std::vector<PreparedSample> all,
                                                                                     double val_fraction);

}  // namespace cvpose
