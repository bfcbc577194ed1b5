#include "cvpose/adjacency.hpp"

#include <cmath>
#include <queue>

namespace cvpose {

namespace {

// Each unordered node pair lands in at most one kernel: the first kernel to
// claim it keeps it.
class KernelBuilder {
 public:
  KernelBuilder(int level, int n) : owner_(Eigen::MatrixXi::Constant(n, n, -1)) {
    set_.level = level;
    set_.n_nodes = n;
    for (auto& k : set_.kernels) k = Eigen::MatrixXd::Zero(n, n);
  }

  void link(int kernel, int i, int j) {
    if (owner_(i, j) != -1) return;
    owner_(i, j) = owner_(j, i) = kernel;
    set_.kernels[static_cast<std::size_t>(kernel)](i, j) = 1.0;
    set_.kernels[static_cast<std::size_t>(kernel)](j, i) = 1.0;
  }

  AdjacencyKernelSet finish() {
    for (int k = 0; k < kNumKernels; ++k) {
      set_.normalized[static_cast<std::size_t>(k)] = normalize_kernel(set_.kernels[static_cast<std::size_t>(k)]);
    }
    return std::move(set_);
  }

 private:
  AdjacencyKernelSet set_;
  Eigen::MatrixXi owner_;
};

Eigen::MatrixXi tree_distances(const SkeletonTopology& topo) {
  const int J = topo.num_joints();
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(J));
  for (const auto& [a, b] : topo.bones) {
    nbrs[static_cast<std::size_t>(a)].push_back(b);
    nbrs[static_cast<std::size_t>(b)].push_back(a);
  }
  Eigen::MatrixXi dist = Eigen::MatrixXi::Constant(J, J, -1);
  for (int s = 0; s < J; ++s) {
    std::queue<int> q;
    q.push(s);
    dist(s, s) = 0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : nbrs[static_cast<std::size_t>(u)]) {
        if (dist(s, v) == -1) {
          dist(s, v) = dist(s, u) + 1;
          q.push(v);
        }
      }
    }
  }
  return dist;
}

// Spatial kernels of one view, offset by `base` in the node index space.
void link_spatial(KernelBuilder& b, const SkeletonTopology& topo, int base) {
  const int J = topo.num_joints();
  for (int j = 0; j < J; ++j) b.link(kSelf, base + j, base + j);
  for (const auto& [k1, k2] : topo.bones) b.link(kPhysical, base + k1, base + k2);
  for (const auto& [l, r] : topo.left_right_joint_pairs) b.link(kSymmetric, base + l, base + r);
  const Eigen::MatrixXi dist = tree_distances(topo);
  for (int i = 0; i < J; ++i) {
    for (int j = i + 1; j < J; ++j) {
      if (dist(i, j) == 2) b.link(kSecondOrder, base + i, base + j);
    }
  }
}

void check_views(int views) {
  if (views != 2) throw UnsupportedViewCount(views);
}

}  // namespace

AdjacencyKernelSet AdjacencyKernelSet::without(std::initializer_list<int> dropped) const {
  AdjacencyKernelSet out = *this;
  for (int k : dropped) {
    out.kernels[static_cast<std::size_t>(k)].setZero();
    out.normalized[static_cast<std::size_t>(k)].setZero();
  }
  return out;
}

Eigen::MatrixXd normalize_kernel(const Eigen::MatrixXd& A) {
  const Eigen::VectorXd deg = A.rowwise().sum();
  Eigen::VectorXd inv_sqrt(deg.size());
  for (Eigen::Index i = 0; i < deg.size(); ++i) inv_sqrt(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
  return inv_sqrt.asDiagonal() * A * inv_sqrt.asDiagonal();
}

AdjacencyKernelSet build_single_view_kernels(const SkeletonTopology& topo) {
  KernelBuilder b(0, topo.num_joints());
  link_spatial(b, topo, 0);
  return b.finish();
}

AdjacencyKernelSet build_multi_view_kernels(const SkeletonTopology& topo, int views) {
  check_views(views);
  const int J = topo.num_joints();
  KernelBuilder b(0, views * J);
  for (int v = 0; v < views; ++v) link_spatial(b, topo, v * J);
  for (int v = 0; v < views; ++v) {
    for (int w = v + 1; w < views; ++w) {
      for (int j = 0; j < J; ++j) b.link(kView, v * J + j, w * J + j);
    }
  }
  return b.finish();
}

namespace {

PoolingMap make_pooling(std::vector<int> group_of, int n_coarse) {
  PoolingMap map;
  map.n_fine = static_cast<int>(group_of.size());
  map.n_coarse = n_coarse;
  map.unpool = Eigen::MatrixXd::Zero(map.n_fine, n_coarse);
  for (int i = 0; i < map.n_fine; ++i) map.unpool(i, group_of[static_cast<std::size_t>(i)]) = 1.0;
  const Eigen::VectorXd sizes = map.unpool.colwise().sum().transpose();
  map.pool = map.unpool.transpose();
  for (int g = 0; g < n_coarse; ++g) map.pool.row(g) /= sizes(g);
  map.group_of = std::move(group_of);
  return map;
}

}  // namespace

GraphLevels build_graph_levels(const SkeletonTopology& topo, int views) {
  check_views(views);
  if (topo.groups.empty()) throw InvalidArgument("graph levels need body-part groups in the topology");
  const int J = topo.num_joints();
  const int G = static_cast<int>(topo.groups.size());

  std::vector<int> group_of_joint(static_cast<std::size_t>(J));
  for (int g = 0; g < G; ++g) {
    for (int j : topo.groups[static_cast<std::size_t>(g)].joints) group_of_joint[static_cast<std::size_t>(j)] = g;
  }

  GraphLevels levels;
  levels.levels.push_back(build_multi_view_kernels(topo, views));

  // Level 1: body-part groups.
  KernelBuilder b1(1, views * G);
  for (int v = 0; v < views; ++v) {
    const int base = v * G;
    for (int g = 0; g < G; ++g) b1.link(kSelf, base + g, base + g);
    for (const auto& [k1, k2] : topo.bones) {
      const int g1 = group_of_joint[static_cast<std::size_t>(k1)];
      const int g2 = group_of_joint[static_cast<std::size_t>(k2)];
      if (g1 != g2) b1.link(kPhysical, base + g1, base + g2);
    }
    for (const auto& [a, c] : topo.group_pairs) b1.link(kSymmetric, base + a, base + c);
  }
  for (int v = 0; v < views; ++v) {
    for (int w = v + 1; w < views; ++w) {
      for (int g = 0; g < G; ++g) b1.link(kView, v * G + g, w * G + g);
    }
  }
  levels.levels.push_back(b1.finish());

  // Level 2: one node per view.
  KernelBuilder b2(2, views);
  for (int v = 0; v < views; ++v) b2.link(kSelf, v, v);
  for (int v = 0; v < views; ++v) {
    for (int w = v + 1; w < views; ++w) b2.link(kView, v, w);
  }
  levels.levels.push_back(b2.finish());

  std::vector<int> to_level1(static_cast<std::size_t>(views * J));
  for (int v = 0; v < views; ++v) {
    for (int j = 0; j < J; ++j) to_level1[static_cast<std::size_t>(v * J + j)] = v * G + group_of_joint[static_cast<std::size_t>(j)];
  }
  std::vector<int> to_level2(static_cast<std::size_t>(views * G));
  for (int v = 0; v < views; ++v) {
    for (int g = 0; g < G; ++g) to_level2[static_cast<std::size_t>(v * G + g)] = v;
  }
  levels.transitions.push_back(make_pooling(std::move(to_level1), views * G));
  levels.transitions.push_back(make_pooling(std::move(to_level2), views));
  return levels;
}

}  // namespace cvpose
