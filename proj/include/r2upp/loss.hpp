#pragma once

#include "r2upp/autograd.hpp"

namespace r2upp {

constexpr double kLossEps = 1e-7;
constexpr double kProbClampLo = 1e-7;
constexpr double kProbClampHi = 1.0 - 1e-7;

// Hybrid cross-entropy + per-pixel soft-dice loss,
//   L = -(1/N) sum_c sum_n [ y log p + 2yp/(y^2 + p^2 + eps) ],
// where N is the pixel count of the batch. Single-channel inputs are
// treated as the two-channel one-hot view (p, 1-p) so background pixels
// contribute to the cross-entropy term.
double hybrid_loss_value(const Tensor& labels, const Tensor& probs);

// Tape node with the analytic gradient w.r.t. the probability map.
autograd::Var hybrid_loss(const Tensor& labels, const autograd::Var& probs);

// Deep-supervision total: sum_i eta_i * hybrid_loss(labels, head_i).
autograd::Var total_loss(const Tensor& labels, const std::vector<autograd::Var>& heads,
                         const std::vector<double>& eta);

}  // namespace r2upp
