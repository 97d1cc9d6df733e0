#include "nsfold/ns_layer.hpp"

#include <algorithm>
#include <cmath>

#include "nsfold/error.hpp"

namespace nsfold {

namespace {

void check_folds(std::size_t channels, std::size_t folds) {
  if (folds == 0 || channels % folds != 0) {
    throw ConfigError("n-fold superposition needs N to divide t (t = " + std::to_string(channels) +
                      ", N = " + std::to_string(folds) + ")");
  }
}

// in: batch x t x pixels, out: batch x (N copies of s x pixels)
void superpose(const double* in, double* out, std::size_t batch, std::size_t t,
               std::size_t pixels, std::span<const double> beta) {
  const std::size_t folds = beta.size();
  const std::size_t block = t / folds * pixels;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = in + b * t * pixels;
    double* dst = out + b * t * pixels;
    for (std::size_t i = 0; i < block; ++i) dst[i] = beta[0] * src[i];
    for (std::size_t r = 1; r < folds; ++r)
      for (std::size_t i = 0; i < block; ++i) dst[i] += beta[r] * src[r * block + i];
    for (std::size_t k = 1; k < folds; ++k) std::copy_n(dst, block, dst + k * block);
  }
}

void superpose_backward(const double* upstream, const double* in, double* grad_in,
                        std::vector<double>& grad_beta, std::size_t batch, std::size_t t,
                        std::size_t pixels, std::span<const double> beta) {
  const std::size_t folds = beta.size();
  const std::size_t block = t / folds * pixels;
  std::vector<double> shared(block);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* up = upstream + b * t * pixels;
    const double* src = in + b * t * pixels;
    double* dst = grad_in + b * t * pixels;
    // every copy k of position l feeds the same superposed map
    std::copy_n(up, block, shared.begin());
    for (std::size_t k = 1; k < folds; ++k)
      for (std::size_t i = 0; i < block; ++i) shared[i] += up[k * block + i];
    for (std::size_t r = 0; r < folds; ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < block; ++i) {
        dst[r * block + i] = beta[r] * shared[i];
        acc += shared[i] * src[r * block + i];
      }
      grad_beta[r] += acc;
    }
  }
}

}  // namespace

Tensor ns_forward(const Tensor& fms, std::span<const double> beta) {
  if (fms.rank() < 1) throw DimensionError("ns_forward expects t x ..., got a scalar");
  const std::size_t t = fms.dim(0);
  check_folds(t, beta.size());
  Tensor out({1, fms.numel()});
  superpose(fms.data(), out.data(), 1, t, fms.numel() / t, beta);
  return out;
}

NsGradients ns_backward(const Tensor& upstream, const Tensor& fms, std::span<const double> beta) {
  if (fms.rank() < 1) throw DimensionError("ns_backward expects t x ..., got a scalar");
  const std::size_t t = fms.dim(0);
  check_folds(t, beta.size());
  if (upstream.numel() != fms.numel()) {
    throw DimensionError("ns_backward: upstream " + shape_string(upstream.shape()) +
                         " vs feature maps " + shape_string(fms.shape()));
  }
  NsGradients g{Tensor(fms.shape()), std::vector<double>(beta.size(), 0.0)};
  superpose_backward(upstream.data(), fms.data(), g.fms.data(), g.beta, 1, t, fms.numel() / t,
                     beta);
  return g;
}

Tensor ns_apply_vector(const Tensor& hidden, std::span<const double> beta) {
  if (hidden.rank() != 2 || hidden.dim(0) != 1) {
    throw DimensionError("ns_apply_vector expects 1 x d, got " + shape_string(hidden.shape()));
  }
  return ns_forward(hidden.reshaped({hidden.dim(1)}), beta);
}

// ---------------------------------------------------------------------------

NsLayer::NsLayer(std::size_t channels, std::size_t folds, double beta_init, NsMode mode)
    : channels_(channels),
      folds_(folds),
      mode_(mode),
      beta_{"beta", Tensor({folds}, beta_init), Tensor({folds}), mode == NsMode::Trainable, false} {
  check_folds(channels, folds);
  if (!std::isfinite(beta_init)) throw ConfigError("beta_init must be finite");
}

Shape NsLayer::output_shape(const Shape& input) const {
  if (input.empty() || input[0] != channels_) {
    throw DimensionError("ns: input " + shape_string(input) + " does not have " +
                         std::to_string(channels_) + " channels");
  }
  return {shape_numel(input)};
}

Tensor NsLayer::forward(const Tensor& x, Phase) {
  if (x.rank() < 2 || x.dim(1) != channels_) {
    throw DimensionError("ns: input " + shape_string(x.shape()) + " does not have " +
                         std::to_string(channels_) + " channels");
  }
  const std::size_t batch = x.dim(0);
  const std::size_t per_sample = x.numel() / std::max<std::size_t>(batch, 1);
  Tensor out({batch, per_sample});
  superpose(x.data(), out.data(), batch, channels_, per_sample / channels_, beta());
  input_ = x;
  return out;
}

Tensor NsLayer::backward(const Tensor& upstream) {
  if (!input_) throw StateError("ns: backward called before forward");
  const Tensor& x = *input_;
  if (upstream.numel() != x.numel()) {
    throw DimensionError("ns: upstream " + shape_string(upstream.shape()) +
                         " does not match the last forward");
  }
  const std::size_t batch = x.dim(0);
  Tensor grad(x.shape());
  std::vector<double> grad_beta(folds_, 0.0);
  superpose_backward(upstream.data(), x.data(), grad.data(), grad_beta, batch, channels_,
                     x.numel() / std::max<std::size_t>(batch * channels_, 1), beta());
  if (mode_ == NsMode::Trainable)
    for (std::size_t r = 0; r < folds_; ++r) beta_.grad[r] += grad_beta[r];
  return grad;
}

std::size_t ns_param_count(const NsLayer& layer) {
  return layer.mode() == NsMode::Trainable ? layer.folds() : 0;
}

}  // namespace nsfold
