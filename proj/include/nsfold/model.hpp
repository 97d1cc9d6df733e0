#pragma once

#include <memory>
#include <vector>

#include "nsfold/layers.hpp"

namespace nsfold {

/// A straight chain of layers. Copying a Model deep-copies every layer,
/// including parameters, caches and RNG state.
class Model {
 public:
  Model() = default;
  explicit Model(Shape input_shape) : input_shape_(std::move(input_shape)) {}
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  /// Appends a layer and checks it accepts the current output shape.
  Layer& add(std::unique_ptr<Layer> layer);

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    return static_cast<L&>(add(std::make_unique<L>(std::forward<Args>(args)...)));
  }

  Tensor forward(const Tensor& x, Phase phase);
  /// Back-propagates the gradient of the loss w.r.t. the model output.
  Tensor backward(const Tensor& grad_output);
  void zero_grad();

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> trainable_parameters();
  [[nodiscard]] std::size_t trainable_parameter_count() const;

  [[nodiscard]] std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  [[nodiscard]] const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  [[nodiscard]] const Shape& input_shape() const { return input_shape_; }
  [[nodiscard]] Shape output_shape() const;
  /// Combined kink fingerprint of every piecewise layer.
  [[nodiscard]] std::uint64_t kink_signature() const;

 private:
  Shape input_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace nsfold
