#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cvpose/adjacency.hpp"
#include "cvpose/autodiff.hpp"
#include "cvpose/camera.hpp"
#include "cvpose/skeleton.hpp"

namespace cvpose {

/// Structural variants used by the ablation harness.
enum class ModelVariant { Full, NoSpatial, NoCrossView, NoFusion, FullyConnected };

std::string to_string(ModelVariant v);
/// "full", "no-spatial", "no-cross-view", "no-fusion", "fully-connected".
ModelVariant parse_model_variant(const std::string& name);

struct NetworkConfig {
  int channels = 128;
  int sgcn_layers = 2;
  int mgcn_layers_per_stage = 1;
  /// Millimeters to network units on the way in, and back on the way out.
  double coord_scale = 1e-3;
  std::uint64_t seed = 0;
  bool share_view_weights = true;
  ModelVariant variant = ModelVariant::Full;
  /// Hidden width of the fully-connected variant; 0 picks the width whose
  /// parameter count matches the full graph model.
  int fc_hidden = 0;

  void validate() const;
};

/// Named parameter tensors in a fixed order.
struct Weights {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> tensors;

  std::size_t size() const { return tensors.size(); }
  /// Total scalar count.
  std::size_t count() const;
  /// Index of a tensor by name, or -1.
  int find(const std::string& name) const;
  const Eigen::MatrixXd& at(const std::string& name) const;
  Eigen::MatrixXd& at(const std::string& name);
  /// Same names and shapes, all zeros.
  Weights zeros_like() const;
};

struct TensorShape {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

/// Every parameter tensor the config calls for, in initialization order.
std::vector<TensorShape> parameter_shapes(const NetworkConfig& config, int num_joints);

/// Uniform in +-sqrt(1 / fan_in) with fan_in the tensor's row count; the output
/// head starts at zero so an untrained model returns its input unchanged.
Weights init_weights(const NetworkConfig& config, int num_joints);

/// Kernels actually used by a variant: ablated kernels are zeroed.
struct ModelGraphs {
  AdjacencyKernelSet single_view;
  GraphLevels levels;
};

ModelGraphs make_graphs(const SkeletonTopology& topo, ModelVariant variant);

struct Model {
  NetworkConfig config;
  SkeletonTopology topology;
  ModelGraphs graphs;
  Weights weights;
};

/// Builds graphs and freshly initialized weights.
Model make_model(const NetworkConfig& config, const SkeletonTopology& topo);
/// Hidden width that gives the fully-connected variant the full model's parameter count.
int matched_fc_hidden(const NetworkConfig& config, int num_joints);

/// Weights placed on a tape; `trainable` selects leaves over constants.
std::vector<ad::Value> bind_weights(ad::Tape& tape, const Weights& w, bool trainable);

/// sum_k normalized_k * H * W_k over each of `blocks` stacked node sets.
/// W holds one matrix per kernel; kernels that are entirely zero are skipped.
ad::Value graph_conv(const ad::Value& H, const AdjacencyKernelSet& kernels, const std::vector<ad::Value>& W,
                     int blocks);

/// Mean of each group's node features.
ad::Value pool(const ad::Value& F, const PoolingMap& map, int blocks);
/// Broadcasts coarse features to group members and adds the skip features.
ad::Value unpool(const ad::Value& F, const PoolingMap& map, const ad::Value& skip, int blocks);
/// Row-concatenates per-sample view features: view 1 rows first, then view 2.
ad::Value fuse(const ad::Value& F1, const ad::Value& F2, int blocks);

/// Binds parameter tensors by name to values on one tape.
class BoundWeights {
 public:
  BoundWeights(const Weights& w, std::vector<ad::Value> values) : weights_(&w), values_(std::move(values)) {}
  const ad::Value& operator[](const std::string& name) const;
  const std::vector<ad::Value>& values() const { return values_; }

 private:
  const Weights* weights_;
  std::vector<ad::Value> values_;
};

/// S-GCN features of one view's coarse poses: (blocks*J) x 3 mm -> (blocks*J) x C.
ad::Value sgcn_forward(const ad::Value& X, const Model& model, const BoundWeights& w, int view, int blocks);

struct RefinedBatch {
  ad::Value view1;
  ad::Value view2;
};

/// Refines a batch of coarse pose pairs, each (blocks*J) x 3 in millimeters in
/// its own camera frame, returning refined poses of the same layout.
RefinedBatch forward(const ad::Value& X1, const ad::Value& X2, const Model& model, const BoundWeights& w, int blocks);

/// Off-tape convenience wrapper around forward().
std::pair<Pose3D, Pose3D> refine(const Model& model, const Pose3D& coarse1, const Pose3D& coarse2);

/// Stacks poses into a (n*J) x 3 matrix and back.
Eigen::MatrixXd stack_poses(const std::vector<const Joints3D*>& poses);
Joints3D unstack_pose(const Eigen::MatrixXd& stacked, int index, int num_joints);

}  // namespace cvpose
