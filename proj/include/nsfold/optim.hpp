#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nsfold/layers.hpp"

namespace nsfold {

struct SgdConfig {
  double learning_rate = 0.01;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t steps = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// p <- p - lr * g
void sgd_step(std::span<Tensor> params, std::span<const Tensor> grads, const SgdConfig& config);

/// Bias-corrected Adam. Moment buffers are created on the first call and
/// must keep matching the parameter shapes afterwards.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

// Optimizers over model parameters. Non-trainable parameters are skipped by
// the caller (Model::trainable_parameters()).
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(const std::vector<Parameter*>& params) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual double learning_rate() const = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(SgdConfig config) : config_(config) {}
  void step(const std::vector<Parameter*>& params) override;
  std::string name() const override { return "sgd"; }
  double learning_rate() const override { return config_.learning_rate; }

 private:
  SgdConfig config_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(AdamConfig config) { state_.config = config; }
  void step(const std::vector<Parameter*>& params) override;
  std::string name() const override { return "adam"; }
  double learning_rate() const override { return state_.config.learning_rate; }
  const AdamState& state() const { return state_; }

 private:
  AdamState state_;
};

}  // namespace nsfold
