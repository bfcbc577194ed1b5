#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "cvpose/network.hpp"

namespace cvpose {

/// AMSGrad moments, one tensor per parameter tensor.
struct AmsgradState {
  Weights m;
  Weights v;
  Weights vhat;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AmsgradState zeros_like(const Weights& params);
};

/// m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2;  vhat <- max(vhat, v);
/// theta <- theta - lr m / (sqrt(vhat) + eps). No bias correction.
void amsgrad_step(Weights& params, const std::vector<Eigen::MatrixXd>& grads, AmsgradState& state, double lr);

/// Multiplies the learning rate by `decay` after `patience` consecutive epochs
/// without a new minimum loss; the count restarts after each decay.
struct PlateauSchedule {
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  /// Records one epoch's loss; returns true when the learning rate should decay.
  bool observe(double loss, int patience);
};

/// New learning rate after the last epoch of `history`, replaying the plateau rule.
double lr_schedule(const std::vector<double>& history, double current_lr, double decay, int patience);

}  // namespace cvpose
