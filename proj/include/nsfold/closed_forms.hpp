#pragma once

#include <cstddef>
#include <vector>

#include "nsfold/tensor.hpp"

namespace nsfold {

// The one-convolution, one-dense toy network used for the analytic gradient
// formulas: a v x u input is cross-correlated (valid, stride 1) with t kernels
// of m x n, the t maps of w = (v-m+1)(u-n+1) pixels are flattened (or
// superposed with N folds), and a dense layer with one shared scalar bias maps
// the t*w features to the class scores. There is no nonlinearity between the
// convolution and the dense layer.
struct ToyModel {
  Tensor input;             // v x u
  Tensor kernels;           // t x m x n
  Tensor weights;           // (t*w) x classes
  double bias = 0.0;        // shared by all outputs
  std::size_t label = 0;
  std::vector<double> beta; // empty: plain flatten; otherwise N = beta.size() folds

  [[nodiscard]] bool superposed() const { return !beta.empty(); }
  [[nodiscard]] std::size_t maps() const { return kernels.dim(0); }
  [[nodiscard]] std::size_t map_pixels() const;
  [[nodiscard]] std::size_t classes() const { return weights.dim(1); }
};

/// Throws ConfigError when the pieces do not fit together.
void validate_toy(const ToyModel& toy);

/// t x h' x w' feature maps.
Tensor toy_feature_maps(const ToyModel& toy);
/// 1 x (t*w) input of the dense layer.
Tensor toy_fc_input(const ToyModel& toy);
/// 1 x classes scores.
Tensor toy_logits(const ToyModel& toy);
double toy_loss(const ToyModel& toy);

/// Gradient of the loss w.r.t. the dense-weight rows fed by map slice `slice`
/// (width `slice_width`): column o is (p_o - [o == label]) * C^slice.
/// Returns slice_width x classes.
Tensor weight_slice_grad(const Tensor& fc_input, const Tensor& logits, std::size_t label,
                       std::size_t slice, std::size_t slice_width);

/// Closed-form kernel gradient. Without folds, kernel j only sees its own
/// weight slice:
///     dL/dK^j = (dI/dK) * sum_o (p_o - [o == label]) W_{slice j, o}.
/// With N folds and s = t/N, kernel j = l + k*s is scaled by beta_k and
/// collects the weight slices of every copy position l + r*s:
///     dL/dK^j = beta_k (dI/dK) * sum_r sum_o (p_o - [o == label]) W_{slice l+r*s, o}.
/// Returns m x n.
Tensor kernel_grad_closed_form(const ToyModel& toy, std::size_t kernel_index);

/// The same sum over r with the beta_k factor left out, as the formula is
/// usually written. Differs from kernel_grad_closed_form by exactly beta_k.
Tensor kernel_grad_unscaled(const ToyModel& toy, std::size_t kernel_index);

}  // namespace nsfold
