#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "cvpose/skeleton.hpp"

namespace cvpose {

inline constexpr int kNumKernels = 5;

/// Fixed kernel slots of the partitioned adjacency.
enum Kernel : int { kSelf = 0, kPhysical = 1, kSecondOrder = 2, kSymmetric = 3, kView = 4 };

/// Five 0/1 adjacency kernels of one graph level and their normalized forms
/// D^-1/2 A D^-1/2 (degrees taken within each kernel; zero-degree rows stay zero).
struct AdjacencyKernelSet {
  int level = 0;
  int n_nodes = 0;
  std::array<Eigen::MatrixXd, kNumKernels> kernels;
  std::array<Eigen::MatrixXd, kNumKernels> normalized;

  /// Copy with the listed kernels replaced by zero matrices.
  AdjacencyKernelSet without(std::initializer_list<int> dropped) const;
};

Eigen::MatrixXd normalize_kernel(const Eigen::MatrixXd& A);

AdjacencyKernelSet build_single_view_kernels(const SkeletonTopology& topo);

/// Node (v, j) has index v * J + j. Throws UnsupportedViewCount unless views == 2.
AdjacencyKernelSet build_multi_view_kernels(const SkeletonTopology& topo, int views);

/// Partition of a finer level's nodes into coarser nodes.
struct PoolingMap {
  int n_fine = 0;
  int n_coarse = 0;
  std::vector<int> group_of;
  /// n_coarse x n_fine group-mean matrix.
  Eigen::MatrixXd pool;
  /// n_fine x n_coarse broadcast matrix.
  Eigen::MatrixXd unpool;
};

/// Level 0: all joints of both views. Level 1: body-part groups per view.
/// Level 2: one node per view. transitions[i] maps level i to level i + 1.
struct GraphLevels {
  std::vector<AdjacencyKernelSet> levels;
  std::vector<PoolingMap> transitions;
};

GraphLevels build_graph_levels(const SkeletonTopology& topo, int views);

}  // namespace cvpose
