#include "nsfold/network.hpp"

#include <cstdio>

namespace nsfold {

namespace {

// Builds a chain while tracking the per-sample shape.
class Builder {
 public:
  Builder(const NetworkConfig& config, Rng& init, Rng& dropout)
      : config_(config), model_(dataset_input_shape(config.data.dataset)), init_(init), dropout_(dropout) {}

  Shape shape() const { return model_.output_shape(); }

  void conv(std::size_t outputs, std::size_t kernel, ConvMode mode, bool bias = true) {
    auto& l = model_.emplace<Conv2DLayer>(shape().at(0), outputs, kernel, kernel, mode, bias);
    l.initialize(init_);
  }
  void dense(std::size_t outputs) {
    auto& l = model_.emplace<DenseLayer>(shape_numel(shape()), outputs);
    l.initialize(init_);
  }
  void relu() { model_.emplace<ReluLayer>(); }
  void maxpool() { model_.emplace<MaxPoolLayer>(); }
  void flatten() {
    if (shape().size() != 1) model_.emplace<FlattenLayer>();
  }
  void reshape(Shape s) { model_.emplace<ReshapeLayer>(std::move(s)); }
  void zeropad(std::size_t p) { model_.emplace<ZeroPadLayer>(Padding{p, p, p, p}); }
  void lrn() { model_.emplace<LrnLayer>(config_.regularizer.lrn); }
  void dropout() {
    model_.emplace<DropoutLayer>(config_.regularizer.keep_rate, dropout_.split(model_.size()));
  }
  void ns() {
    const NsConfig& ns = config_.ns;
    model_.emplace<NsLayer>(shape().at(0), ns.folds, effective_beta(config_), ns.mode);
  }

  // The optional pieces in front of the classifier head.
  void pre_head() {
    if (config_.ns.enabled) ns();
    if (config_.regularizer.kind == Regularizer::Dropout) dropout();
    flatten();
  }
  void optional_lrn() {
    if (config_.regularizer.kind == Regularizer::Lrn) lrn();
  }

  Model take() { return std::move(model_); }

 private:
  const NetworkConfig& config_;
  Model model_;
  Rng& init_;
  Rng& dropout_;
};

void vgg_features(Builder& b, const std::vector<int>& plan) {
  for (int v : plan) {
    if (v == 0) {
      b.maxpool();
    } else {
      b.conv(static_cast<std::size_t>(v), 3, ConvMode::Same);
      b.relu();
    }
  }
}

std::vector<int> vgg_plan(Preset p) {
  switch (p) {
    case Preset::VGG11: return {64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0};
    case Preset::VGG16:
      return {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
    case Preset::VGG19:
      return {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0};
    default: return {};
  }
}

void custom(Builder& b, const NetworkConfig& config) {
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const LayerSpec& s = config.layers[i];
    try {
      if (s.type == "conv") {
        if (s.outputs == 0) throw ConfigError("conv needs outputs");
        b.conv(s.outputs, s.kernel, s.padding, s.bias);
      } else if (s.type == "dense") {
        if (s.outputs == 0) throw ConfigError("dense needs outputs");
        b.flatten();
        b.dense(s.outputs);
      } else if (s.type == "relu") {
        b.relu();
      } else if (s.type == "maxpool") {
        b.maxpool();
      } else if (s.type == "flatten") {
        b.flatten();
      } else if (s.type == "reshape") {
        b.reshape(s.shape);
      } else if (s.type == "zeropad") {
        b.zeropad(s.pad);
      } else if (s.type == "lrn") {
        b.lrn();
      } else if (s.type == "dropout") {
        b.dropout();
      } else if (s.type == "ns") {
        if (config.ns.enabled) b.ns();
      } else {
        throw ConfigError("unknown layer type '" + s.type + "'");
      }
    } catch (const DimensionError& e) {
      throw ConfigError("layers[" + std::to_string(i) + "] (" + s.type + "): " + e.what());
    }
  }
}

}  // namespace

Shape dataset_input_shape(const std::string& dataset) {
  if (dataset == "mnist") return {1, 28, 28};
  if (dataset == "cifar10") return {3, 32, 32};
  throw ConfigError("unknown dataset '" + dataset + "'");
}

Model build_network(const NetworkConfig& config, Rng init, Rng dropout) {
  validate(config);
  Builder b(config, init, dropout);
  switch (config.preset) {
    case Preset::SimpleMLP:
      b.flatten();
      b.dense(784);
      b.relu();
      if (config.regularizer.kind == Regularizer::Lrn) {
        b.reshape({4, 14, 14});
        b.lrn();
        b.flatten();
      }
      b.pre_head();
      b.dense(10);
      break;
    case Preset::SimpleCNN:
      b.conv(64, 5, ConvMode::Same);
      b.relu();
      b.optional_lrn();
      b.maxpool();
      b.pre_head();
      b.dense(1024);
      b.relu();
      b.dense(10);
      break;
    case Preset::LeNet5:
      if (b.shape().at(1) == 28) b.zeropad(2);
      b.conv(6, 5, ConvMode::Valid);
      b.relu();
      b.optional_lrn();
      b.maxpool();
      b.conv(16, 5, ConvMode::Valid);
      b.relu();
      b.maxpool();
      b.pre_head();
      b.dense(120);
      b.relu();
      b.dense(84);
      b.relu();
      b.dense(10);
      break;
    case Preset::VGG11:
    case Preset::VGG16:
    case Preset::VGG19:
      vgg_features(b, vgg_plan(config.preset));
      b.pre_head();
      b.dense(4096);
      b.relu();
      b.dense(4096);
      b.relu();
      b.dense(10);
      break;
    case Preset::Custom:
      custom(b, config);
      b.flatten();
      break;
  }
  Model model = b.take();
  const Shape out = model.output_shape();
  if (out != Shape{10}) throw ConfigError("network output " + shape_string(out) + " is not 10 classes");
  return model;
}

Model build_network(const NetworkConfig& config) {
  const Rng root(config.seed);
  return build_network(config, root.split(streams::kInit), root.split(streams::kDropout));
}

std::size_t find_ns_layer(const Model& model) {
  for (std::size_t i = 0; i < model.size(); ++i)
    if (model.layer(i).kind() == "ns") return i;
  return model.size();
}

std::string describe(const Model& model) {
  std::string out;
  Shape shape = model.input_shape();
  char line[160];
  std::snprintf(line, sizeof line, "     input      %s\n", shape_string(shape).c_str());
  out += line;
  Model copy = model;
  for (std::size_t i = 0; i < copy.size(); ++i) {
    Layer& l = copy.layer(i);
    shape = l.output_shape(shape);
    std::size_t params = 0;
    for (Parameter* p : l.parameters())
      if (p->trainable) params += p->value.numel();
    std::snprintf(line, sizeof line, "%4zu %-10s %-14s %zu\n", i, l.kind().c_str(), shape_string(shape).c_str(),
                  params);
    out += line;
  }
  std::snprintf(line, sizeof line, "trainable parameters: %zu\n", model.trainable_parameter_count());
  out += line;
  return out;
}

}  // namespace nsfold
