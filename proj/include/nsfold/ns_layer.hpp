#pragma once

#include <span>
#include <vector>

#include "nsfold/layers.hpp"

namespace nsfold {

// N-fold superposition.
//
// A stack of t feature maps is split into N blocks of s = t/N consecutive
// channels (channel r*s + l is position l of block r). The blocks are summed
// position-wise with coefficients beta_r, giving s superposed maps
//
//     M^l = sum_r beta_r * F^{l + r*s},     l = 0..s-1,
//
// and the block [M^0 .. M^{s-1}] is repeated N times and flattened. The output
// therefore has exactly as many features as the plain flatten of the input,
// so the dense layer that follows is unchanged.

enum class NsMode { Fixed, Trainable };

struct NsGradients {
  Tensor fms;                // same shape as the forward input
  std::vector<double> beta;  // d loss / d beta_r
};

/// fms: t x h x w (any trailing shape). Returns 1 x (t*h*w).
Tensor ns_forward(const Tensor& fms, std::span<const double> beta);

/// upstream: 1 x (t*h*w) gradient of the flattened output.
NsGradients ns_backward(const Tensor& upstream, const Tensor& fms, std::span<const double> beta);

/// Vector form for dense hidden layers: hidden is 1 x d, read as d maps of one
/// unit each. Output is 1 x d.
Tensor ns_apply_vector(const Tensor& hidden, std::span<const double> beta);

class NsLayer final : public Layer {
 public:
  /// `channels` is t; `folds` is N and must divide t.
  NsLayer(std::size_t channels, std::size_t folds, double beta_init, NsMode mode);

  std::string kind() const override { return "ns"; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<NsLayer>(*this); }
  Shape output_shape(const Shape& input) const override;
  std::vector<Parameter*> parameters() override { return {&beta_}; }

  std::size_t channels() const { return channels_; }
  std::size_t folds() const { return folds_; }
  NsMode mode() const { return mode_; }
  std::span<const double> beta() const { return beta_.value.values(); }
  Parameter& beta_parameter() { return beta_; }

 private:
  std::size_t channels_;
  std::size_t folds_;
  NsMode mode_;
  Parameter beta_;
  std::optional<Tensor> input_;
};

/// Coefficients the layer adds to the trainable parameter count: N for
/// trainable beta, 0 for fixed.
std::size_t ns_param_count(const NsLayer& layer);

}  // namespace nsfold
