#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nsfold/config.hpp"
#include "nsfold/gradcheck.hpp"

namespace nsfold {

// Ready-made gradient audits: small chains that together reach every layer
// kind a preset can contain, and the presets themselves on random images.

struct AuditCase {
  std::string name;
  Model model;
  Tensor inputs;
  std::vector<std::uint8_t> labels;
  CheckOptions options;
};

/// Names accepted by audit_case.
const std::vector<std::string>& audit_combinations();

/// Builds combination `name` with weights, inputs and labels drawn from `seed`.
/// Every coordinate is audited. Unknown names raise ConfigError.
AuditCase audit_case(const std::string& name, std::uint64_t seed);

/// The preset network on `batch` random images of its dataset shape.
/// Large tensors are sampled (`coords` coordinates each).
AuditCase preset_audit_case(const NetworkConfig& config, std::uint64_t seed, std::size_t batch = 2,
                            std::size_t coords = 24);

GradReport run_audit(const AuditCase& audit, double tolerance);

/// Scales the analytic gradient of tensor `index % count` by `factor` before
/// comparison (fault-injection sentinel).
CheckOptions::Tamper scale_gradient(std::size_t index, double factor);

}  // namespace nsfold
