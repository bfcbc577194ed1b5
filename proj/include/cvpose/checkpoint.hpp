#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "cvpose/network.hpp"
#include "cvpose/optimizer.hpp"

namespace cvpose {

/// Model weights plus, for resumable training, optimizer and schedule state.
struct Checkpoint {
  NetworkConfig network;
  std::string topology_fingerprint;
  Weights weights;
  std::int64_t step = 0;
  /// Epochs completed.
  int epoch = 0;
  double lr = 0.0;
  PlateauSchedule schedule;
  double best_val = std::numeric_limits<double>::infinity();
  std::optional<AmsgradState> optimizer;
};

/// ckpt-v1: line-oriented text, numbers printed with 17 significant digits.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model a checkpoint describes. Throws SchemaError when the
/// checkpoint was trained on a different topology or its tensors do not
/// match the configuration.
Model model_from_checkpoint(const Checkpoint& ckpt, const SkeletonTopology& topo);
/// Checkpoint of an untrained or trained model, without optimizer state.
Checkpoint checkpoint_from_model(const Model& model);

/// 17 significant digits; reads back to the same double.
std::string format_double(double v);

}  // namespace cvpose
