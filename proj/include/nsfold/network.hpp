#pragma once

#include <string>

#include "nsfold/config.hpp"
#include "nsfold/model.hpp"

namespace nsfold {

/// Per-sample input shape of a dataset name: mnist 1x28x28, cifar10 3x32x32.
Shape dataset_input_shape(const std::string& dataset);

/// Builds and initializes the network of `config`. Weights come from
/// `init` (He-normal, zero biases); each dropout layer gets its own split of
/// `dropout`. NS (when enabled) goes right before the classifier head and
/// before any dropout; an incompatible fold count raises ConfigError.
///
///   SimpleMLP  784 -> dense 784 -> relu -> [lrn on 4x14x14] -> [ns] -> [dropout] -> dense 10
///   SimpleCNN  conv 64@5x5 same -> relu -> [lrn] -> maxpool -> [ns] -> [dropout]
///              -> dense 1024 -> relu -> dense 10
///   LeNet5     pad 2 -> conv 6@5x5 -> relu -> [lrn] -> maxpool -> conv 16@5x5 -> relu
///              -> maxpool -> [ns] -> [dropout] -> dense 120 -> relu -> dense 84 -> relu -> dense 10
///   VGG-n      3x3 same convs with relu and maxpools (configurations A, D, E)
///              -> [ns] -> [dropout] -> dense 4096 -> relu -> dense 4096 -> relu -> dense 10
Model build_network(const NetworkConfig& config, Rng init, Rng dropout);

/// Seeds from config.seed with the standard substreams.
Model build_network(const NetworkConfig& config);

/// Index of the first NS layer, or model.size() when there is none.
std::size_t find_ns_layer(const Model& model);

/// One line per layer: index, kind, output shape, parameter count.
std::string describe(const Model& model);

}  // namespace nsfold
