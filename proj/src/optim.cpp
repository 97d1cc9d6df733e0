#include "nsfold/optim.hpp"

#include <cmath>

#include "nsfold/error.hpp"

namespace nsfold {

namespace {

void require_matching(std::span<const Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw DimensionError("optimizer: parameter " + shape_string(params[i].shape()) +
                           " vs gradient " + shape_string(grads[i].shape()));
    }
  }
}

void sgd_update(Tensor& p, const Tensor& g, double lr) {
  double* w = p.data();
  const double* d = g.data();
  for (std::size_t i = 0; i < p.numel(); ++i) w[i] -= lr * d[i];
}

void adam_update(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, const AdamConfig& c,
                 std::uint64_t step) {
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  const double step_size = c.learning_rate / bc1;
  const double root_bc2 = std::sqrt(bc2);
  double* __restrict w = p.data();
  const double* __restrict d = g.data();
  double* __restrict m1 = m.data();
  double* __restrict m2 = v.data();
  const std::size_t n = p.numel();
  const double b1 = c.beta1, b2 = c.beta2, eps = c.epsilon;
  for (std::size_t i = 0; i < n; ++i) {
    const double g1 = b1 * m1[i] + (1.0 - b1) * d[i];
    const double g2 = b2 * m2[i] + (1.0 - b2) * d[i] * d[i];
    m1[i] = g1;
    m2[i] = g2;
    w[i] -= step_size * g1 / (std::sqrt(g2) / root_bc2 + eps);
  }
}

void ensure_moments(AdamState& state, std::span<const Tensor> params) {
  if (state.first_moment.empty() && state.steps == 0) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam: state tracks " + std::to_string(state.first_moment.size()) +
                         " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].shape() != params[i].shape()) {
      throw DimensionError("adam: moment " + shape_string(state.first_moment[i].shape()) +
                           " vs parameter " + shape_string(params[i].shape()));
    }
  }
}

}  // namespace

void sgd_step(std::span<Tensor> params, std::span<const Tensor> grads, const SgdConfig& config) {
  require_matching(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i)
    sgd_update(params[i], grads[i], config.learning_rate);
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  require_matching(params, grads);
  ensure_moments(state, params);
  ++state.steps;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(params[i], grads[i], state.first_moment[i], state.second_moment[i], state.config,
                state.steps);
  }
}

void Sgd::step(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) sgd_update(p->value, p->grad, config_.learning_rate);
}

void Adam::step(const std::vector<Parameter*>& params) {
  if (state_.first_moment.empty() && state_.steps == 0) {
    for (const Parameter* p : params) {
      state_.first_moment.emplace_back(p->value.shape());
      state_.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state_.first_moment.size() != params.size()) {
    throw DimensionError("adam: state tracks " + std::to_string(state_.first_moment.size()) +
                         " tensors, got " + std::to_string(params.size()));
  }
  ++state_.steps;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (state_.first_moment[i].shape() != p.value.shape()) {
      throw DimensionError("adam: moment " + shape_string(state_.first_moment[i].shape()) +
                           " vs parameter " + shape_string(p.value.shape()));
    }
    adam_update(p.value, p.grad, state_.first_moment[i], state_.second_moment[i], state_.config,
                state_.steps);
  }
}

}  // namespace nsfold
