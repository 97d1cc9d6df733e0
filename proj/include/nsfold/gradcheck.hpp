#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nsfold/closed_forms.hpp"
#include "nsfold/error.hpp"
#include "nsfold/model.hpp"

namespace nsfold {

/// The model contains a layer the audit does not know how to drive.
class AuditError : public Error {
 public:
  using Error::Error;
};

/// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric);

/// max|a - b| / max(max|a|, max|b|, 1e-8): whole-tensor agreement.
double scaled_error(const Tensor& a, const Tensor& b);

using LossFn = std::function<double(const std::vector<Tensor>&)>;

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate
/// of every tensor. Throws NumericError on a non-finite loss.
std::vector<Tensor> finite_diff(const LossFn& loss, std::vector<Tensor> params, double step);

/// Absolute error a central difference of step h cannot rule out: four
/// rounding units of the loss magnitude, divided by 2h.
double resolution_limit(double loss_plus, double loss_minus, double step);

struct TensorCheck {
  std::string name;  // "<layer index>:<kind>.<parameter>"
  std::size_t checked = 0;
  std::size_t excluded = 0;
  /// Coordinates whose gradient is too small for the central difference to
  /// resolve at the tolerance; these must agree within resolution_limit.
  std::size_t below_resolution = 0;
  double max_abs_error_below_resolution = 0.0;
  bool resolution_failed = false;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

struct GradReport {
  double tolerance = 0.0;
  double step = 0.0;
  std::vector<TensorCheck> tensors;
  bool passed = true;

  [[nodiscard]] std::size_t excluded() const;
  /// Tensor holding the largest relative error.
  [[nodiscard]] const TensorCheck* worst() const;
};

struct CheckOptions {
  double step = 1e-5;
  /// Coordinates audited per tensor; 0 audits all of them. Larger tensors are
  /// sampled without replacement.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  using Tamper = std::function<void(std::vector<Tensor>& grads, const std::vector<std::string>& names)>;
  /// Applied to the analytic gradients before comparison (fault injection).
  Tamper tamper;
};

/// Audits every trainable parameter of `model` (which is copied, never
/// mutated) against central differences of the mean softmax cross-entropy on
/// the batch. Dropout masks are drawn once and frozen. A coordinate whose
/// plus or minus probe changes any ReLU sign or pool winner sits on a kink
/// and is excluded (and counted). A coordinate with max(|a|, |f|) * tolerance
/// below resolution_limit is compared absolutely against that limit instead.
GradReport check_model(const Model& model, const Tensor& inputs,
                       std::span<const std::uint8_t> labels, double tolerance,
                       const CheckOptions& options = {});

std::string format_report(const GradReport& report);

// ---------------------------------------------------------------------------
// Closed-form audit on the single-convolution toy network.

struct ToyGradients {
  Tensor weights;  // (t*w) x classes
  Tensor kernels;  // t x m x n
};

/// Gradients of the toy network through the layer stack
/// (Conv2DLayer -> NsLayer | FlattenLayer -> DenseLayer).
ToyGradients toy_backprop(const ToyModel& toy);

struct ClosedFormCase {
  std::uint64_t seed = 0;
  bool superposed = false;
  double weight_error = 0.0;       // weight formula vs backprop
  double kernel_error = 0.0;       // closed-form kernel grad vs backprop
  double kernel_fd_error = 0.0;    // closed-form kernel grad vs finite differences
  double literal_ratio_error = 0.0;  // |beta_k * literal - closed form|, scaled
  std::size_t affected_kernels = 0;
  std::size_t expected_affected = 0;
  bool passed = false;
};

struct ClosedFormReport {
  std::size_t maps = 0;
  std::size_t folds = 0;
  std::vector<ClosedFormCase> cases;
  bool passed = true;
  /// Seeds of failing cases, in order.
  std::vector<std::uint64_t> failing_seeds;
};

struct ClosedFormTolerances {
  double weight = 1e-12;
  double kernel = 1e-10;
  double finite_difference = 1e-6;
  double fd_step = 1e-5;
};

/// Random toy instances for seeds base_seed .. base_seed + seed_count - 1,
/// each checked with and without superposition: the weight and kernel
/// formulas against backprop and finite differences, and the locality of a
/// weight-slice perturbation (one kernel without folds, N kernels with).
ClosedFormReport verify_closed_forms(std::size_t seed_count, std::size_t maps, std::size_t folds,
                                     std::uint64_t base_seed = 1,
                                     const ClosedFormTolerances& tol = {});

/// Random toy instance used by the audit (4 x 4 input, 3 x 3 kernels, 10 classes).
ToyModel random_toy(std::uint64_t seed, std::size_t maps, std::size_t folds);

std::string format_report(const ClosedFormReport& report);

}  // namespace nsfold
