#include "cvpose/network.hpp"

#include <cmath>
#include <memory>
#include <random>

namespace cvpose {

namespace {

using ad::Matrix;
using ad::Tape;
using ad::Value;
using MapMatrix = Eigen::Map<Eigen::MatrixXd>;
using ConstMapMatrix = Eigen::Map<const Eigen::MatrixXd>;

constexpr const char* kStages[] = {"enc0", "enc1", "bottleneck", "dec1", "dec0"};

std::string kernel_name(const std::string& prefix, int layer, int k) {
  return prefix + ".l" + std::to_string(layer) + ".k" + std::to_string(k);
}

std::string sgcn_prefix(const NetworkConfig& c, int view) {
  return c.share_view_weights ? std::string("sgcn") : "sgcn.v" + std::to_string(view);
}

void add_layer(std::vector<TensorShape>& out, const std::string& prefix, int layer, int cin, int cout) {
  for (int k = 0; k < kNumKernels; ++k) out.push_back({kernel_name(prefix, layer, k), cin, cout});
}

bool is_zero(const Matrix& m) { return m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0; }
bool is_identity(const Matrix& m) { return m.rows() == m.cols() && m == Matrix::Identity(m.rows(), m.cols()); }

// rows of block b of `a` multiplied by M, for all blocks at once (see ad::block_left_multiply).
void block_left_apply(const Matrix& M, const double* in, double* out, Eigen::Index blocks, Eigen::Index cols,
                      bool accumulate, bool transpose) {
  const Eigen::Index n = transpose ? M.rows() : M.cols();
  const Eigen::Index m = transpose ? M.cols() : M.rows();
  ConstMapMatrix src(in, n, blocks * cols);
  MapMatrix dst(out, m, blocks * cols);
  if (transpose) {
    if (accumulate) {
      dst.noalias() += M.transpose() * src;
    } else {
      dst.noalias() = M.transpose() * src;
    }
  } else if (accumulate) {
    dst.noalias() += M * src;
  } else {
    dst.noalias() = M * src;
  }
}

}  // namespace

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Full: return "full";
    case ModelVariant::NoSpatial: return "no-spatial";
    case ModelVariant::NoCrossView: return "no-cross-view";
    case ModelVariant::NoFusion: return "no-fusion";
    case ModelVariant::FullyConnected: return "fully-connected";
  }
  return "full";
}

ModelVariant parse_model_variant(const std::string& name) {
  for (auto v : {ModelVariant::Full, ModelVariant::NoSpatial, ModelVariant::NoCrossView, ModelVariant::NoFusion,
                 ModelVariant::FullyConnected}) {
    if (to_string(v) == name) return v;
  }
  throw InvalidArgument("unknown model variant '" + name + "'");
}

void NetworkConfig::validate() const {
  if (channels < 1) throw InvalidArgument("channels must be >= 1");
  if (sgcn_layers < 1) throw InvalidArgument("sgcn_layers must be >= 1");
  if (mgcn_layers_per_stage < 1) throw InvalidArgument("mgcn_layers_per_stage must be >= 1");
  if (!(coord_scale > 0.0) || !std::isfinite(coord_scale)) throw InvalidArgument("coord_scale must be > 0");
  if (fc_hidden < 0) throw InvalidArgument("fc_hidden must be >= 0");
}

std::size_t Weights::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

int Weights::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

const Eigen::MatrixXd& Weights::at(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw InvalidArgument("no parameter named '" + name + "'");
  return tensors[static_cast<std::size_t>(i)];
}

Eigen::MatrixXd& Weights::at(const std::string& name) {
  return const_cast<Eigen::MatrixXd&>(static_cast<const Weights&>(*this).at(name));
}

Weights Weights::zeros_like() const {
  Weights z;
  z.names = names;
  for (const auto& t : tensors) z.tensors.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  return z;
}

int matched_fc_hidden(const NetworkConfig& config, int num_joints) {
  NetworkConfig full = config;
  full.variant = ModelVariant::Full;
  std::size_t total = 0;
  for (const auto& s : parameter_shapes(full, num_joints)) total += static_cast<std::size_t>(s.rows * s.cols);
  const double io = 2.0 * 2.0 * num_joints * 3.0;
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(total) / io)));
}

std::vector<TensorShape> parameter_shapes(const NetworkConfig& config, int num_joints) {
  config.validate();
  const int C = config.channels;
  std::vector<TensorShape> out;
  if (config.variant == ModelVariant::FullyConnected) {
    const int io = 2 * num_joints * 3;
    const int h = config.fc_hidden > 0 ? config.fc_hidden : matched_fc_hidden(config, num_joints);
    out.push_back({"fc.in", io, h});
    out.push_back({"fc.out", h, io});
    return out;
  }
  int cin = 3;
  if (config.variant != ModelVariant::NoFusion) {
    const int copies = config.share_view_weights ? 1 : 2;
    for (int v = 0; v < copies; ++v) {
      for (int l = 0; l < config.sgcn_layers; ++l) add_layer(out, sgcn_prefix(config, v), l, l == 0 ? 3 : C, C);
    }
    cin = C;
  }
  for (const char* stage : kStages) {
    for (int l = 0; l < config.mgcn_layers_per_stage; ++l) {
      add_layer(out, std::string("mgcn.") + stage, l, cin, C);
      cin = C;
    }
  }
  out.push_back({"head", C, 3});
  return out;
}

Weights init_weights(const NetworkConfig& config, int num_joints) {
  std::mt19937_64 rng(config.seed);
  Weights w;
  for (const auto& s : parameter_shapes(config, num_joints)) {
    Eigen::MatrixXd t(s.rows, s.cols);
    if (s.name == "head" || s.name == "fc.out") {
      t.setZero();
    } else {
      const double bound = std::sqrt(1.0 / static_cast<double>(s.rows));
      // Row-major fill so the draw order does not depend on storage order.
      for (Eigen::Index r = 0; r < s.rows; ++r) {
        for (Eigen::Index c = 0; c < s.cols; ++c) {
          const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
          t(r, c) = bound * (2.0 * u - 1.0);
        }
      }
    }
    w.names.push_back(s.name);
    w.tensors.push_back(std::move(t));
  }
  return w;
}

ModelGraphs make_graphs(const SkeletonTopology& topo, ModelVariant variant) {
  ModelGraphs g{build_single_view_kernels(topo), build_graph_levels(topo, 2)};
  if (variant == ModelVariant::NoSpatial) {
    g.single_view = g.single_view.without({kPhysical, kSecondOrder, kSymmetric});
    for (auto& l : g.levels.levels) l = l.without({kPhysical, kSecondOrder, kSymmetric});
  } else if (variant == ModelVariant::NoCrossView) {
    for (auto& l : g.levels.levels) l = l.without({kView});
  }
  return g;
}

Model make_model(const NetworkConfig& config, const SkeletonTopology& topo) {
  config.validate();
  Model m;
  m.config = config;
  m.topology = topo;
  m.graphs = make_graphs(topo, config.variant);
  m.weights = init_weights(config, topo.num_joints());
  return m;
}

std::vector<Value> bind_weights(Tape& tape, const Weights& w, bool trainable) {
  std::vector<Value> out;
  out.reserve(w.size());
  for (const auto& t : w.tensors) out.push_back(trainable ? tape.leaf(t, "weight") : tape.constant(t, "weight"));
  return out;
}

const Value& BoundWeights::operator[](const std::string& name) const {
  const int i = weights_->find(name);
  if (i < 0) throw InvalidArgument("no parameter named '" + name + "'");
  return values_[static_cast<std::size_t>(i)];
}

Value graph_conv(const Value& H, const AdjacencyKernelSet& kernels, const std::vector<Value>& W, int blocks) {
  if (W.size() != static_cast<std::size_t>(kNumKernels)) throw ShapeMismatch("graph_conv: expected 5 weight matrices");
  const Eigen::Index N = kernels.n_nodes;
  if (blocks < 1 || H.rows() != blocks * N) {
    throw ShapeMismatch("graph_conv: " + std::to_string(H.rows()) + " rows is not " + std::to_string(blocks) +
                        " blocks of " + std::to_string(N) + " nodes");
  }
  const Eigen::Index cin = H.cols();
  const Eigen::Index cout = W[0].cols();
  std::vector<int> active;
  for (int k = 0; k < kNumKernels; ++k) {
    const Matrix& w = W[static_cast<std::size_t>(k)].data();
    if (w.rows() != cin || w.cols() != cout) throw ShapeMismatch("graph_conv: weight shape mismatch at kernel " + std::to_string(k));
    if (!is_zero(kernels.normalized[static_cast<std::size_t>(k)])) active.push_back(k);
  }
  const auto na = static_cast<Eigen::Index>(active.size());
  const Eigen::Index rows = H.rows();

  // Propagated inputs side by side, [A_k0 H, A_k1 H, ...], against the
  // stacked weights: a single product for all kernels.
  auto S = std::make_shared<Matrix>(rows, na * cin);
  Matrix Wstack(na * cin, cout);
  // Kernel copies keep the backward pass independent of the kernel set's lifetime.
  std::vector<Matrix> As(static_cast<std::size_t>(na));
  for (Eigen::Index a = 0; a < na; ++a) {
    const int k = active[static_cast<std::size_t>(a)];
    const Matrix& A = kernels.normalized[static_cast<std::size_t>(k)];
    if (!is_identity(A)) As[static_cast<std::size_t>(a)] = A;
    if (is_identity(A)) {
      S->middleCols(a * cin, cin) = H.data();
    } else {
      block_left_apply(A, H.data().data(), S->data() + a * cin * rows, blocks, cin, false, false);
    }
    Wstack.middleRows(a * cin, cin) = W[static_cast<std::size_t>(k)].data();
  }
  Matrix Z = na > 0 ? Matrix(*S * Wstack) : Matrix::Zero(rows, cout);

  std::vector<int> parents{H.node_id()};
  std::vector<int> weight_ids;
  for (int k : active) {
    weight_ids.push_back(W[static_cast<std::size_t>(k)].node_id());
    parents.push_back(weight_ids.back());
  }
  const int ih = H.node_id();
  return H.tape()->record(
      std::move(Z), std::move(parents), "graph_conv",
      [S, Wstack = std::move(Wstack), As = std::move(As), weight_ids, ih, blocks, cin, rows](Tape& t, int self) {
        const Matrix& G = t.node(self).grad;
        const auto na = static_cast<Eigen::Index>(As.size());
        bool any_w = false;
        for (int id : weight_ids) any_w = any_w || t.wants_grad(id);
        if (any_w) {
          const Matrix dW = S->transpose() * G;
          for (Eigen::Index a = 0; a < na; ++a) t.accumulate(weight_ids[static_cast<std::size_t>(a)], dW.middleRows(a * cin, cin));
        }
        if (!t.wants_grad(ih)) return;
        const Matrix dS = G * Wstack.transpose();
        Matrix& gh = t.node(ih).grad;
        for (Eigen::Index a = 0; a < na; ++a) {
          const Matrix& A = As[static_cast<std::size_t>(a)];
          if (A.size() == 0) {
            gh += dS.middleCols(a * cin, cin);
          } else {
            block_left_apply(A, dS.data() + a * cin * rows, gh.data(), blocks, cin, true, true);
          }
        }
      });
}

Value pool(const Value& F, const PoolingMap& map, int blocks) { return ad::block_left_multiply(map.pool, F, blocks); }

Value unpool(const Value& F, const PoolingMap& map, const Value& skip, int blocks) {
  const Value up = ad::block_left_multiply(map.unpool, F, blocks);
  if (skip.rows() != up.rows() || skip.cols() != up.cols()) throw ShapeMismatch("unpool: skip shape differs from fine level");
  return up + skip;
}

Value fuse(const Value& F1, const Value& F2, int blocks) { return ad::concat_rows(F1, F2, blocks); }

namespace {

std::vector<Value> layer_weights(const BoundWeights& w, const std::string& prefix, int layer) {
  std::vector<Value> out;
  for (int k = 0; k < kNumKernels; ++k) out.push_back(w[kernel_name(prefix, layer, k)]);
  return out;
}

Value mgcn_stage(Value H, const Model& model, const BoundWeights& w, const char* stage, int level, int blocks) {
  const AdjacencyKernelSet& kernels = model.graphs.levels.levels[static_cast<std::size_t>(level)];
  for (int l = 0; l < model.config.mgcn_layers_per_stage; ++l) {
    H = ad::relu(graph_conv(H, kernels, layer_weights(w, std::string("mgcn.") + stage, l), blocks));
  }
  return H;
}

RefinedBatch split_residual(const Value& X1, const Value& X2, const Value& residual, double coord_scale, int J,
                            int blocks) {
  const Value r1 = ad::slice_rows(residual, 0, J, blocks);
  const Value r2 = ad::slice_rows(residual, J, J, blocks);
  return {X1 + ad::scale(r1, 1.0 / coord_scale), X2 + ad::scale(r2, 1.0 / coord_scale)};
}


}  // namespace

Value sgcn_forward(const Value& X, const Model& model, const BoundWeights& w, int view, int blocks) {
  Value H = ad::scale(X, model.config.coord_scale);
  const std::string prefix = sgcn_prefix(model.config, view);
  for (int l = 0; l < model.config.sgcn_layers; ++l) {
    H = ad::relu(graph_conv(H, model.graphs.single_view, layer_weights(w, prefix, l), blocks));
  }
  return H;
}

RefinedBatch forward(const Value& X1, const Value& X2, const Model& model, const BoundWeights& w, int blocks) {
  const int J = model.topology.num_joints();
  if (X1.rows() != blocks * J || X2.rows() != blocks * J || X1.cols() != 3 || X2.cols() != 3) {
    throw ShapeMismatch("forward: coarse poses must be (blocks * J) x 3");
  }
  const NetworkConfig& c = model.config;

  if (c.variant == ModelVariant::FullyConnected) {
    const Value in = ad::flatten_blocks(fuse(ad::scale(X1, c.coord_scale), ad::scale(X2, c.coord_scale), blocks), blocks);
    const Value hidden = ad::relu(ad::matmul(in, w["fc.in"]));
    const Value residual = ad::unflatten_blocks(ad::matmul(hidden, w["fc.out"]), 3);
    return split_residual(X1, X2, residual, c.coord_scale, J, blocks);
  }

  Value fused;
  if (c.variant == ModelVariant::NoFusion) {
    fused = fuse(ad::scale(X1, c.coord_scale), ad::scale(X2, c.coord_scale), blocks);
  } else {
    fused = fuse(sgcn_forward(X1, model, w, 0, blocks), sgcn_forward(X2, model, w, 1, blocks), blocks);
  }
  const auto& transitions = model.graphs.levels.transitions;
  const Value e0 = mgcn_stage(fused, model, w, "enc0", 0, blocks);
  const Value e1 = mgcn_stage(pool(e0, transitions[0], blocks), model, w, "enc1", 1, blocks);
  const Value b = mgcn_stage(pool(e1, transitions[1], blocks), model, w, "bottleneck", 2, blocks);
  const Value d1 = mgcn_stage(unpool(b, transitions[1], e1, blocks), model, w, "dec1", 1, blocks);
  const Value d0 = mgcn_stage(unpool(d1, transitions[0], e0, blocks), model, w, "dec0", 0, blocks);
  const Value residual = ad::matmul(d0, w["head"]);
  return split_residual(X1, X2, residual, c.coord_scale, J, blocks);
}

std::pair<Pose3D, Pose3D> refine(const Model& model, const Pose3D& coarse1, const Pose3D& coarse2) {
  Tape tape;
  const BoundWeights w(model.weights, bind_weights(tape, model.weights, false));
  const RefinedBatch out =
      forward(tape.constant(coarse1.joints, "coarse1"), tape.constant(coarse2.joints, "coarse2"), model, w, 1);
  return {Pose3D{out.view1.data(), coarse1.frame_id}, Pose3D{out.view2.data(), coarse2.frame_id}};
}

Eigen::MatrixXd stack_poses(const std::vector<const Joints3D*>& poses) {
  if (poses.empty()) return Eigen::MatrixXd(0, 3);
  const Eigen::Index J = poses.front()->rows();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(poses.size()) * J, 3);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (poses[i]->rows() != J) throw ShapeMismatch("stack_poses: joint counts differ");
    out.middleRows(static_cast<Eigen::Index>(i) * J, J) = *poses[i];
  }
  return out;
}

Joints3D unstack_pose(const Eigen::MatrixXd& stacked, int index, int num_joints) {
  return stacked.middleRows(static_cast<Eigen::Index>(index) * num_joints, num_joints);
}

}  // namespace cvpose
