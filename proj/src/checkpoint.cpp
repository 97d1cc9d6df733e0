#include "nsfold/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "nsfold/ns_layer.hpp"

namespace nsfold {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'N', 'S', 'F', 'C'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8;

json layer_attributes(const Layer& layer) {
  Layer& l = const_cast<Layer&>(layer);
  const std::string kind = layer.kind();
  if (kind == "dense") {
    auto& d = static_cast<DenseLayer&>(l);
    return {{"inputs", d.inputs()}, {"outputs", d.outputs()}};
  }
  if (kind == "conv2d") {
    auto& c = static_cast<Conv2DLayer&>(l);
    const Shape& k = c.kernels().value.shape();
    return {{"in_channels", k[1]}, {"out_channels", k[0]}, {"kernel_h", k[2]}, {"kernel_w", k[3]},
            {"mode", c.mode() == ConvMode::Same ? "same" : "valid"}, {"bias", c.has_bias()}};
  }
  if (kind == "reshape") return {{"shape", static_cast<const ReshapeLayer&>(layer).sample_shape()}};
  if (kind == "zeropad") {
    const Padding p = static_cast<const ZeroPadLayer&>(layer).padding();
    return {{"top", p.top}, {"bottom", p.bottom}, {"left", p.left}, {"right", p.right}};
  }
  if (kind == "dropout") return {{"keep_rate", static_cast<const DropoutLayer&>(layer).keep_rate()}};
  if (kind == "lrn") {
    const LrnParams& p = static_cast<const LrnLayer&>(layer).params();
    return {{"size", p.size}, {"k", p.k}, {"alpha", p.alpha}, {"beta", p.beta}};
  }
  if (kind == "ns") {
    const auto& n = static_cast<const NsLayer&>(layer);
    return {{"channels", n.channels()},
            {"folds", n.folds()},
            {"mode", n.mode() == NsMode::Trainable ? "trainable" : "fixed"}};
  }
  return json::object();
}

template <typename T>
T attr(const json& a, const char* key, std::size_t index) {
  try {
    return a.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError("checkpoint manifest: layer " + std::to_string(index) + " lacks attribute '" + key + "'");
  }
}

std::unique_ptr<Layer> make_layer(const std::string& kind, const json& a, std::size_t i) {
  if (kind == "dense") return std::make_unique<DenseLayer>(attr<std::size_t>(a, "inputs", i), attr<std::size_t>(a, "outputs", i));
  if (kind == "conv2d") {
    const ConvMode mode = attr<std::string>(a, "mode", i) == "same" ? ConvMode::Same : ConvMode::Valid;
    return std::make_unique<Conv2DLayer>(attr<std::size_t>(a, "in_channels", i), attr<std::size_t>(a, "out_channels", i),
                                         attr<std::size_t>(a, "kernel_h", i), attr<std::size_t>(a, "kernel_w", i),
                                         mode, attr<bool>(a, "bias", i));
  }
  if (kind == "relu") return std::make_unique<ReluLayer>();
  if (kind == "maxpool2d") return std::make_unique<MaxPoolLayer>();
  if (kind == "flatten") return std::make_unique<FlattenLayer>();
  if (kind == "reshape") return std::make_unique<ReshapeLayer>(attr<Shape>(a, "shape", i));
  if (kind == "zeropad") {
    return std::make_unique<ZeroPadLayer>(Padding{attr<std::size_t>(a, "top", i), attr<std::size_t>(a, "bottom", i),
                                                  attr<std::size_t>(a, "left", i), attr<std::size_t>(a, "right", i)});
  }
  if (kind == "dropout") return std::make_unique<DropoutLayer>(attr<double>(a, "keep_rate", i), Rng(0));
  if (kind == "lrn") {
    return std::make_unique<LrnLayer>(LrnParams{attr<std::size_t>(a, "size", i), attr<double>(a, "k", i),
                                                attr<double>(a, "alpha", i), attr<double>(a, "beta", i)});
  }
  if (kind == "ns") {
    const NsMode mode = attr<std::string>(a, "mode", i) == "trainable" ? NsMode::Trainable : NsMode::Fixed;
    return std::make_unique<NsLayer>(attr<std::size_t>(a, "channels", i), attr<std::size_t>(a, "folds", i), 1.0, mode);
  }
  throw FormatError("checkpoint manifest: layer " + std::to_string(i) + " has unknown kind '" + kind + "'");
}

std::string layer_name(std::size_t i, const std::string& kind) { return "layer " + std::to_string(i) + " (" + kind + ")"; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  p += ".json";
  return p;
}

void save_checkpoint(const Model& model, const fs::path& path, const NetworkConfig* config, std::uint64_t seed) {
  Model copy = model;
  json manifest = json::array();
  std::vector<double> payload;
  for (std::size_t i = 0; i < copy.size(); ++i) {
    Layer& layer = copy.layer(i);
    json params = json::array();
    for (Parameter* p : layer.parameters()) {
      params.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"trainable", p->trainable}});
      payload.insert(payload.end(), p->value.values().begin(), p->value.values().end());
    }
    manifest.push_back({{"kind", layer.kind()}, {"attributes", layer_attributes(layer)}, {"parameters", params}});
  }
  json side = {{"format_version", kCheckpointVersion},
               {"input_shape", model.input_shape()},
               {"layers", manifest},
               {"values", payload.size()},
               {"seed", seed}};
  if (config) side["config"] = to_json(*config);

  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t count = payload.size();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw IoError("write failed: " + path.string());

  std::ofstream js(sidecar_path(path));
  if (!js) throw IoError("cannot write " + sidecar_path(path).string());
  js << side.dump(2) << "\n";
  if (!js) throw IoError("write failed: " + sidecar_path(path).string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  const std::string side_text = read_file(sidecar_path(path));
  json side;
  try {
    side = json::parse(side_text);
  } catch (const json::exception& e) {
    throw FormatError(sidecar_path(path).string() + ": " + e.what());
  }

  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  std::memcpy(&version, bytes.data() + 4, sizeof version);
  std::memcpy(&count, bytes.data() + 8, sizeof count);
  const std::uint32_t side_version = side.value("format_version", 0u);
  if (version != kCheckpointVersion || side_version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + " (sidecar " +
                       std::to_string(side_version) + "), this build reads version " +
                       std::to_string(kCheckpointVersion));
  }

  Checkpoint ck;
  try {
    ck.model = Model(side.at("input_shape").get<Shape>());
    ck.seed = side.value("seed", std::uint64_t{0});
    if (side.contains("config")) ck.config = config_from_json(side.at("config"));
  } catch (const json::exception& e) {
    throw FormatError(sidecar_path(path).string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(sidecar_path(path).string() + ": config: " + e.what());
  }

  if (!side.contains("layers") || !side["layers"].is_array())
    throw FormatError(sidecar_path(path).string() + ": no layer manifest");
  const json& layers = side["layers"];
  std::size_t needed = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& entry = layers[i];
    const std::string kind = entry.value("kind", "");
    try {
      ck.model.add(make_layer(kind, entry.value("attributes", json::object()), i));
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw ShapeError("checkpoint manifest: " + layer_name(i, kind) + " does not fit: " + e.what());
    }
    const std::vector<Parameter*> params = ck.model.layer(i).parameters();
    const json listed = entry.value("parameters", json::array());
    if (listed.size() != params.size()) {
      throw ShapeError("checkpoint manifest: " + layer_name(i, kind) + " lists " + std::to_string(listed.size()) +
                       " parameters, the layer has " + std::to_string(params.size()));
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Shape shape = listed[p].value("shape", Shape{});
      if (shape != params[p]->value.shape()) {
        throw ShapeError("checkpoint manifest: " + layer_name(i, kind) + " parameter " + params[p]->name + " is " +
                         shape_string(shape) + ", the layer needs " + shape_string(params[p]->value.shape()));
      }
      needed += params[p]->value.numel();
    }
  }

  const std::size_t expected_bytes = kHeaderBytes + needed * sizeof(double);
  if (count != needed || bytes.size() != expected_bytes) {
    throw LengthError("checkpoint payload of " + path.string() + ": expected " + std::to_string(needed) + " values (" +
                      std::to_string(expected_bytes) + " bytes), found " + std::to_string(count) +
                      " values in the header and " + std::to_string(bytes.size()) + " bytes on disk");
  }
  const char* src = bytes.data() + kHeaderBytes;
  for (Parameter* p : ck.model.parameters()) {
    std::memcpy(p->value.data(), src, p->value.numel() * sizeof(double));
    src += p->value.numel() * sizeof(double);
  }
  return ck;
}

}  // namespace nsfold
