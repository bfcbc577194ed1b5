#include "cvpose/optimizer.hpp"

#include <cmath>

namespace cvpose {

AmsgradState AmsgradState::zeros_like(const Weights& params) {
  AmsgradState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.vhat = params.zeros_like();
  return s;
}

void amsgrad_step(Weights& params, const std::vector<Eigen::MatrixXd>& grads, AmsgradState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size() ||
      state.vhat.size() != params.size()) {
    throw ShapeMismatch("amsgrad_step: tensor counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.tensors[i];
    const auto& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m.tensors[i].rows() != p.rows() ||
        state.m.tensors[i].cols() != p.cols()) {
      throw ShapeMismatch("amsgrad_step: shape mismatch for '" + params.names[i] + "'");
    }
    auto m = state.m.tensors[i].array();
    auto v = state.v.tensors[i].array();
    auto vhat = state.vhat.tensors[i].array();
    m = state.beta1 * m + (1.0 - state.beta1) * g.array();
    v = state.beta2 * v + (1.0 - state.beta2) * g.array().square();
    vhat = vhat.max(v);
    p.array() -= lr * m / (vhat.sqrt() + state.eps);
  }
  ++state.step;
}

bool PlateauSchedule::observe(double loss, int patience) {
  if (loss < best) {
    best = loss;
    since_best = 0;
    return false;
  }
  if (++since_best >= patience) {
    since_best = 0;
    return true;
  }
  return false;
}

double lr_schedule(const std::vector<double>& history, double current_lr, double decay, int patience) {
  PlateauSchedule s;
  bool decay_now = false;
  for (double loss : history) decay_now = s.observe(loss, patience);
  return decay_now ? current_lr * decay : current_lr;
}

}  // namespace cvpose
