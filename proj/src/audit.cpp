#include "nsfold/audit.hpp"

#include "nsfold/network.hpp"
#include "nsfold/ns_layer.hpp"

namespace nsfold {

namespace {

constexpr std::size_t kBatch = 3;
constexpr std::size_t kClasses = 10;

struct Chain {
  Model model;
  Rng rng;

  Chain(Shape input, std::uint64_t seed) : model(std::move(input)), rng(Rng(seed).split(streams::kInit)) {}

  std::size_t channels() const { return model.output_shape().at(0); }
  void dense(std::size_t outputs) {
    model.emplace<DenseLayer>(shape_numel(model.output_shape()), outputs).initialize(rng);
  }
  void conv(std::size_t outputs, ConvMode mode, bool bias = true) {
    model.emplace<Conv2DLayer>(channels(), outputs, 3, 3, mode, bias).initialize(rng);
  }
  void ns(std::size_t folds, double beta, NsMode mode) {
    model.emplace<NsLayer>(channels(), folds, beta, mode);
  }
};

Tensor random_inputs(const Shape& sample, std::size_t batch, Rng& rng, bool unit) {
  Shape shape{batch};
  shape.insert(shape.end(), sample.begin(), sample.end());
  Tensor x(shape);
  for (double& v : x.values()) v = unit ? rng.uniform() : rng.normal();
  return x;
}

std::vector<std::uint8_t> random_labels(std::size_t batch, Rng& rng) {
  std::vector<std::uint8_t> labels(batch);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng.index(kClasses));
  return labels;
}

}  // namespace

const std::vector<std::string>& audit_combinations() {
  static const std::vector<std::string> names = {
      "dense_relu",       "conv_valid_pool", "conv_same_lrn", "zeropad_conv_nobias",
      "ns_fixed_dropout", "ns_trainable",    "vector_ns_lrn",
  };
  return names;
}

AuditCase audit_case(const std::string& name, std::uint64_t seed) {
  Rng data = Rng(seed).split(streams::kGradcheck);
  const Rng dropout = Rng(seed).split(streams::kDropout);
  Shape input;
  if (name == "dense_relu" || name == "vector_ns_lrn") input = {16};
  else if (name == "conv_same_lrn") input = {2, 6, 6};
  else if (name == "zeropad_conv_nobias") input = {1, 5, 5};
  else if (name == "conv_valid_pool") input = {1, 8, 8};
  else if (name == "ns_fixed_dropout" || name == "ns_trainable") input = {1, 6, 6};
  else throw ConfigError("unknown audit combination '" + name + "'");

  Chain c(input, seed);
  if (name == "dense_relu") {
    c.dense(12);
    c.model.emplace<ReluLayer>();
    c.dense(10);
  } else if (name == "conv_valid_pool") {
    c.conv(3, ConvMode::Valid);
    c.model.emplace<ReluLayer>();
    c.model.emplace<MaxPoolLayer>();
    c.model.emplace<FlattenLayer>();
    c.dense(10);
  } else if (name == "conv_same_lrn") {
    c.conv(4, ConvMode::Same);
    c.model.emplace<ReluLayer>();
    c.model.emplace<LrnLayer>(LrnParams{3, 2.0, 0.5, 0.75});
    c.model.emplace<MaxPoolLayer>();
    c.model.emplace<FlattenLayer>();
    c.dense(10);
  } else if (name == "zeropad_conv_nobias") {
    c.model.emplace<ZeroPadLayer>(Padding{1, 1, 1, 1});
    c.conv(2, ConvMode::Valid, false);
    c.model.emplace<ReluLayer>();
    c.model.emplace<FlattenLayer>();
    c.dense(10);
  } else if (name == "ns_fixed_dropout") {
    c.conv(4, ConvMode::Same);
    c.model.emplace<ReluLayer>();
    c.model.emplace<MaxPoolLayer>();
    c.ns(2, 0.25, NsMode::Fixed);
    c.model.emplace<DropoutLayer>(0.5, dropout);
    c.dense(10);
  } else if (name == "ns_trainable") {
    c.conv(4, ConvMode::Same);
    c.model.emplace<ReluLayer>();
    c.model.emplace<MaxPoolLayer>();
    c.ns(4, 0.25, NsMode::Trainable);
    c.model.emplace<DropoutLayer>(0.75, dropout);
    c.dense(6);
    c.model.emplace<ReluLayer>();
    c.dense(10);
  } else {
    c.dense(16);
    c.model.emplace<ReluLayer>();
    c.model.emplace<ReshapeLayer>(Shape{4, 2, 2});
    c.model.emplace<LrnLayer>(LrnParams{3, 2.0, 0.5, 0.75});
    c.model.emplace<FlattenLayer>();
    c.ns(2, 1.0, NsMode::Trainable);
    c.dense(10);
  }

  AuditCase audit;
  audit.name = name;
  audit.inputs = random_inputs(input, kBatch, data, false);
  audit.labels = random_labels(kBatch, data);
  audit.model = std::move(c.model);
  audit.options.seed = seed;
  return audit;
}

AuditCase preset_audit_case(const NetworkConfig& config, std::uint64_t seed, std::size_t batch,
                            std::size_t coords) {
  NetworkConfig c = config;
  c.seed = seed;
  Rng data = Rng(seed).split(streams::kGradcheck);
  AuditCase audit;
  audit.name = c.name;
  audit.model = build_network(c);
  audit.inputs = random_inputs(audit.model.input_shape(), batch, data, true);
  audit.labels = random_labels(batch, data);
  audit.options.seed = seed;
  audit.options.max_coords_per_tensor = coords;
  return audit;
}

GradReport run_audit(const AuditCase& audit, double tolerance) {
  return check_model(audit.model, audit.inputs, audit.labels, tolerance, audit.options);
}

CheckOptions::Tamper scale_gradient(std::size_t index, double factor) {
  return [index, factor](std::vector<Tensor>& grads, const std::vector<std::string>&) {
    if (grads.empty()) return;
    for (double& g : grads[index % grads.size()].values()) g *= factor;
  };
}

}  // namespace nsfold
