#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsfold/dataset.hpp"
#include "nsfold/error.hpp"
#include "nsfold/layers.hpp"
#include "nsfold/ns_layer.hpp"

namespace nsfold {

enum class Preset { SimpleMLP, SimpleCNN, LeNet5, VGG11, VGG16, VGG19, Custom };

std::string to_string(Preset preset);
/// Accepts the canonical names case-insensitively ("simplecnn", "VGG16", ...).
Preset preset_from_string(const std::string& name);

/// One entry of a Custom layer list. `type` is one of conv, dense, relu,
/// maxpool, flatten, reshape, zeropad, lrn, dropout, ns.
struct LayerSpec {
  std::string type;
  std::size_t outputs = 0;  // conv: kernels, dense: units
  std::size_t kernel = 3;
  ConvMode padding = ConvMode::Same;
  bool bias = true;
  std::size_t pad = 0;  // zeropad: border on every side
  Shape shape;          // reshape target
};

struct NsConfig {
  bool enabled = false;
  std::size_t folds = 2;
  NsMode mode = NsMode::Fixed;
  /// Unset means the preset default.
  std::optional<double> beta_init;
};

enum class Regularizer { None, L2, Lrn, Dropout };

std::string to_string(Regularizer r);
Regularizer regularizer_from_string(const std::string& name);

struct RegularizerConfig {
  Regularizer kind = Regularizer::None;
  double lambda = 1e-4;
  double keep_rate = 0.5;
  LrnParams lrn;
};

struct OptimizerConfig {
  std::string kind = "adam";  // adam | sgd
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct DataConfig {
  std::string dataset = "mnist";  // mnist | cifar10
  /// Dataset root; empty means $NSFOLD_DATA_DIR.
  std::filesystem::path root;
  /// Explicit file overrides (MNIST images/labels, CIFAR batches).
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::vector<std::filesystem::path> train_batches, test_batches;
  std::size_t train_subset = 0;  // first n training images; 0 = all
  std::size_t test_subset = 0;
  /// Hold out part of the training set; with recombine the held-out part
  /// rejoins training and only serves for tuning elsewhere.
  std::size_t validation = 0;
  std::uint64_t validation_seed = 0;
  bool recombine = true;
  /// Unset: unit for MNIST, per-channel standardization for CIFAR-10.
  std::optional<Normalization> normalization;
};

enum class EvalReport { Final, Best };

struct NetworkConfig {
  std::string name = "run";
  Preset preset = Preset::SimpleCNN;
  std::vector<LayerSpec> layers;  // Custom only
  NsConfig ns;
  RegularizerConfig regularizer;
  OptimizerConfig optimizer;
  std::size_t batch_size = 100;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  std::size_t repeats = 5;
  DataConfig data;
  /// Which per-trial value the headline mean and std use.
  EvalReport report = EvalReport::Final;
  std::string profile = "custom";
};

/// Validates ranges that do not need the network (batch size, keep rate, ...).
void validate(const NetworkConfig& config);

/// Default beta_init per preset: SimpleMLP 1.00, SimpleCNN 0.25,
/// LeNet5 0.25 for N = 2 and 0.10 for N >= 4, VGG 0.02, Custom 0.25.
double default_beta(Preset preset, std::size_t folds);
double effective_beta(const NetworkConfig& config);

/// desk: 10k training images, 10 epochs, 5 repeats.
/// full: all training images, 100 epochs, 5 repeats.
/// smoke: 5k training images, 2 epochs, 1 repeat.
void apply_profile(NetworkConfig& config, const std::string& profile);

/// The settings the experiments use for a preset: Adam at 1e-3 except
/// SimpleMLP, which uses plain gradient descent.
NetworkConfig preset_config(Preset preset);

nlohmann::json to_json(const NetworkConfig& config);
/// Unknown keys are rejected (ConfigError) so typos do not pass silently.
NetworkConfig config_from_json(const nlohmann::json& j);
NetworkConfig load_config(const std::filesystem::path& path);

/// Root named by the config, else $NSFOLD_DATA_DIR, else "data".
std::filesystem::path data_root(const DataConfig& data);

}  // namespace nsfold
