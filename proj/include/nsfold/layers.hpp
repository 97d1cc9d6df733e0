#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nsfold/rng.hpp"
#include "nsfold/tensor.hpp"

namespace nsfold {

enum class Phase { Train, Eval };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  /// Included in the L2 penalty (weights and kernels; never biases or beta).
  bool decays = false;
};

// Shared forward/backward contract. Activations are batch-first: axis 0 is
// the sample index. A layer caches what its backward needs during forward,
// so an instance serves one thread at a time. backward() accumulates into
// the parameter gradients and returns the gradient w.r.t. the last input.
class Layer {
 public:
  virtual ~Layer() = default;

  [[nodiscard]] virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x, Phase phase) = 0;
  virtual Tensor backward(const Tensor& upstream) = 0;
  /// Same results as forward/backward; may reuse the argument's buffer.
  virtual Tensor forward_owned(Tensor x, Phase phase) { return forward(x, phase); }
  virtual Tensor backward_owned(Tensor upstream) { return backward(upstream); }
  [[nodiscard]] virtual std::unique_ptr<Layer> clone() const = 0;
  /// Per-sample output shape for a per-sample input shape.
  [[nodiscard]] virtual Shape output_shape(const Shape& input) const = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Fingerprint of the piecewise branch taken on the last forward (ReLU
  /// signs, pool winners). Zero for smooth layers.
  [[nodiscard]] virtual std::uint64_t kink_signature() const { return 0; }
  /// The first layer of a model never needs its input gradient.
  virtual void set_input_grad_required(bool /*required*/) {}
};

std::uint64_t hash_bytes(const void* bytes, std::size_t size, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::size_t inputs, std::size_t outputs);
  /// He-normal weights, zero bias.
  void initialize(Rng& rng);

  std::string kind() const override { return "dense"; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }
  Shape output_shape(const Shape& input) const override;
  std::vector<Parameter*> parameters() override { return {&weights_, &bias_}; }
  void set_input_grad_required(bool required) override { input_grad_ = required; }

  Parameter& weights() { return weights_; }
  Parameter& bias() { return bias_; }
  std::size_t inputs() const { return weights_.value.dim(0); }
  std::size_t outputs() const { return weights_.value.dim(1); }

 private:
  Parameter weights_;
  Parameter bias_;
  std::optional<Tensor> input_;
  bool input_grad_ = true;
};

class Conv2DLayer final : public Layer {
 public:
  Conv2DLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h,
              std::size_t kernel_w, ConvMode mode, bool with_bias = true);
  void initialize(Rng& rng);

  std::string kind() const override { return "conv2d"; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2DLayer>(*this); }
  Shape output_shape(const Shape& input) const override;
  std::vector<Parameter*> parameters() override;
  void set_input_grad_required(bool required) override { input_grad_ = required; }

  Parameter& kernels() { return kernels_; }
  ConvMode mode() const { return mode_; }
  bool has_bias() const { return with_bias_; }

 private:
  Parameter kernels_;  // t x c x m x n
  Parameter bias_;     // t
  ConvMode mode_;
  bool with_bias_;
  std::optional<Tensor> input_;
  bool input_grad_ = true;
};

class ReluLayer final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Tensor forward(const Tensor& x, Phase phase) override { return forward_owned(x, phase); }
  Tensor backward(const Tensor& upstream) override { return backward_owned(upstream); }
  Tensor forward_owned(Tensor x, Phase phase) override;
  Tensor backward_owned(Tensor upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReluLayer>(*this); }
  Shape output_shape(const Shape& input) const override { return input; }
  std::uint64_t kink_signature() const override;

 private:
  Shape shape_;
  std::vector<unsigned char> active_;  // x > 0 on the last forward
  bool ready_ = false;
};

class MaxPoolLayer final : public Layer {
 public:
  std::string kind() const override { return "maxpool2d"; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPoolLayer>(*this); }
  Shape output_shape(const Shape& input) const override;
  std::uint64_t kink_signature() const override;

 private:
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
  bool ready_ = false;
};

class FlattenLayer final : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Tensor forward(const Tensor& x, Phase phase) override { return forward_owned(x, phase); }
  Tensor backward(const Tensor& upstream) override { return backward_owned(upstream); }
  Tensor forward_owned(Tensor x, Phase phase) override;
  Tensor backward_owned(Tensor upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<FlattenLayer>(*this); }
  Shape output_shape(const Shape& input) const override { return {shape_numel(input)}; }

 private:
  Shape input_shape_;
};

/// Reinterprets each sample with a new per-sample shape (same element count).
class ReshapeLayer final : public Layer {
 public:
  explicit ReshapeLayer(Shape sample_shape) : sample_shape_(std::move(sample_shape)) {}
  std::string kind() const override { return "reshape"; }
  Tensor forward(const Tensor& x, Phase phase) override { return forward_owned(x, phase); }
  Tensor backward(const Tensor& upstream) override { return backward_owned(upstream); }
  Tensor forward_owned(Tensor x, Phase phase) override;
  Tensor backward_owned(Tensor upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReshapeLayer>(*this); }
  Shape output_shape(const Shape& input) const override;
  const Shape& sample_shape() const { return sample_shape_; }

 private:
  Shape sample_shape_;
  Shape input_shape_;
};

/// Zero border around every plane of a B x c x h x w batch.
class ZeroPadLayer final : public Layer {
 public:
  explicit ZeroPadLayer(Padding pad) : pad_(pad) {}
  std::string kind() const override { return "zeropad"; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ZeroPadLayer>(*this); }
  Shape output_shape(const Shape& input) const override;
  Padding padding() const { return pad_; }

 private:
  Padding pad_;
  Shape input_shape_;
};

/// Inverted dropout: kept units are scaled by 1/keep_rate during training,
/// evaluation is the identity.
class DropoutLayer final : public Layer {
 public:
  DropoutLayer(double keep_rate, Rng rng);

  std::string kind() const override { return "dropout"; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DropoutLayer>(*this); }
  Shape output_shape(const Shape& input) const override { return input; }

  /// Reuse the last training mask instead of drawing a new one (gradient audits).
  void freeze_mask(bool frozen) { frozen_ = frozen; }
  double keep_rate() const { return keep_rate_; }
  const Tensor& mask() const { return mask_; }

 private:
  double keep_rate_;
  Rng rng_;
  Tensor mask_;
  bool frozen_ = false;
  bool last_train_ = false;
  bool ready_ = false;
};

struct LrnParams {
  std::size_t size = 5;  // channels in the window, centred on the unit
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;
};

/// Cross-channel local response normalization over a c x h x w stack:
/// out[i] = x[i] / (k + alpha * sum_{j in window(i)} x[j]^2)^beta,
/// the window clipped at the first and last channel.
Tensor lrn_forward(const Tensor& x, const LrnParams& params);

class LrnLayer final : public Layer {
 public:
  explicit LrnLayer(LrnParams params = {}) : params_(params) {}
  std::string kind() const override { return "lrn"; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& upstream) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LrnLayer>(*this); }
  Shape output_shape(const Shape& input) const override { return input; }
  const LrnParams& params() const { return params_; }

 private:
  LrnParams params_;
  std::optional<Tensor> input_;
  Tensor scale_;  // k + alpha * windowed sum of squares
};

// ---------------------------------------------------------------------------
// Free-standing forms of the per-sample operations.

Tensor relu(const Tensor& x);
/// Passes upstream where x > 0; the subgradient at 0 is 0.
Tensor relu_backward(const Tensor& upstream, const Tensor& x);
/// c x h x w (any rank) -> 1 x numel, row-major.
Tensor flatten(const Tensor& x);

struct L2Penalty {
  double term = 0.0;
  /// 2 * lambda * w for each decaying parameter, in parameter order.
  std::vector<Tensor> grads;
};

/// lambda * sum(w^2) over parameters flagged `decays`.
L2Penalty l2_penalty(const std::vector<Parameter*>& params, double lambda);
/// Adds the penalty gradient into each decaying parameter's grad; returns the term.
double apply_l2_penalty(const std::vector<Parameter*>& params, double lambda);

}  // namespace nsfold
