#include "nsfold/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

namespace nsfold {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::string to_string(ConvMode m) { return m == ConvMode::Same ? "same" : "valid"; }

ConvMode conv_mode_from_string(const std::string& s) {
  const std::string l = lower(s);
  if (l == "same") return ConvMode::Same;
  if (l == "valid") return ConvMode::Valid;
  throw ConfigError("unknown padding '" + s + "' (same | valid)");
}

std::string to_string(NsMode m) { return m == NsMode::Trainable ? "tns" : "fns"; }

NsMode ns_mode_from_string(const std::string& s) {
  const std::string l = lower(s);
  if (l == "fns" || l == "fixed") return NsMode::Fixed;
  if (l == "tns" || l == "trainable") return NsMode::Trainable;
  throw ConfigError("unknown ns mode '" + s + "' (fns | tns)");
}

json paths_json(const std::vector<fs::path>& ps) {
  json a = json::array();
  for (const auto& p : ps) a.push_back(p.string());
  return a;
}

}  // namespace

std::string to_string(Preset preset) {
  switch (preset) {
    case Preset::SimpleMLP: return "SimpleMLP";
    case Preset::SimpleCNN: return "SimpleCNN";
    case Preset::LeNet5: return "LeNet5";
    case Preset::VGG11: return "VGG11";
    case Preset::VGG16: return "VGG16";
    case Preset::VGG19: return "VGG19";
    case Preset::Custom: return "Custom";
  }
  return "?";
}

Preset preset_from_string(const std::string& name) {
  const std::string l = lower(name);
  for (Preset p : {Preset::SimpleMLP, Preset::SimpleCNN, Preset::LeNet5, Preset::VGG11, Preset::VGG16,
                   Preset::VGG19, Preset::Custom})
    if (lower(to_string(p)) == l) return p;
  if (l == "lenet-5" || l == "lenet") return Preset::LeNet5;
  throw ConfigError("unknown preset '" + name + "'");
}

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::None: return "none";
    case Regularizer::L2: return "l2";
    case Regularizer::Lrn: return "lrn";
    case Regularizer::Dropout: return "dropout";
  }
  return "?";
}

Regularizer regularizer_from_string(const std::string& name) {
  const std::string l = lower(name);
  for (Regularizer r : {Regularizer::None, Regularizer::L2, Regularizer::Lrn, Regularizer::Dropout})
    if (to_string(r) == l) return r;
  throw ConfigError("unknown regularizer '" + name + "' (none | l2 | lrn | dropout)");
}

void validate(const NetworkConfig& c) {
  if (c.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (c.repeats < 1) throw ConfigError("repeats must be at least 1");
  if (c.preset == Preset::Custom && c.layers.empty()) throw ConfigError("Custom preset needs a layer list");
  if (c.ns.enabled && c.ns.folds < 2) throw ConfigError("ns.folds must be at least 2");
  if (c.ns.beta_init && !std::isfinite(*c.ns.beta_init)) throw ConfigError("ns.beta_init must be finite");
  const RegularizerConfig& r = c.regularizer;
  if (r.kind == Regularizer::Dropout && !(r.keep_rate > 0.0 && r.keep_rate <= 1.0))
    throw ConfigError("dropout keep_rate must lie in (0, 1]");
  if (r.kind == Regularizer::L2 && !(r.lambda >= 0.0)) throw ConfigError("l2 lambda must be >= 0");
  if (c.optimizer.kind != "adam" && c.optimizer.kind != "sgd")
    throw ConfigError("optimizer.kind must be adam or sgd, got '" + c.optimizer.kind + "'");
  if (!(c.optimizer.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be > 0");
  if (c.data.dataset != "mnist" && c.data.dataset != "cifar10")
    throw ConfigError("data.dataset must be mnist or cifar10, got '" + c.data.dataset + "'");
  if (c.profile != "desk" && c.profile != "full" && c.profile != "smoke" && c.profile != "custom")
    throw ConfigError("unknown profile '" + c.profile + "'");
}

double default_beta(Preset preset, std::size_t folds) {
  switch (preset) {
    case Preset::SimpleMLP: return 1.0;
    case Preset::SimpleCNN: return 0.25;
    case Preset::LeNet5: return folds >= 4 ? 0.10 : 0.25;
    case Preset::VGG11:
    case Preset::VGG16:
    case Preset::VGG19: return 0.02;
    case Preset::Custom: return 0.25;
  }
  return 0.25;
}

double effective_beta(const NetworkConfig& config) {
  return config.ns.beta_init.value_or(default_beta(config.preset, config.ns.folds));
}

void apply_profile(NetworkConfig& config, const std::string& profile) {
  if (profile == "desk") {
    config.data.train_subset = 10000;
    config.epochs = 10;
    config.repeats = 5;
  } else if (profile == "full") {
    config.data.train_subset = 0;
    config.epochs = 100;
    config.repeats = 5;
  } else if (profile == "smoke") {
    config.data.train_subset = 5000;
    config.epochs = 2;
    config.repeats = 1;
  } else {
    throw ConfigError("unknown profile '" + profile + "' (desk | full | smoke)");
  }
  config.profile = profile;
}

NetworkConfig preset_config(Preset preset) {
  NetworkConfig c;
  c.preset = preset;
  c.name = lower(to_string(preset));
  if (preset == Preset::SimpleMLP) {
    c.optimizer.kind = "sgd";
    c.optimizer.learning_rate = 0.05;
  }
  if (preset == Preset::LeNet5) {
    c.regularizer.kind = Regularizer::Dropout;
  }
  if (preset == Preset::VGG11 || preset == Preset::VGG16 || preset == Preset::VGG19) {
    c.data.dataset = "cifar10";
    c.regularizer.kind = Regularizer::Dropout;
    c.optimizer.learning_rate = 1e-4;
  }
  return c;
}

json to_json(const NetworkConfig& c) {
  json layers = json::array();
  for (const LayerSpec& l : c.layers) {
    json e{{"type", l.type}};
    if (l.type == "conv") {
      e["outputs"] = l.outputs;
      e["kernel"] = l.kernel;
      e["padding"] = to_string(l.padding);
      e["bias"] = l.bias;
    } else if (l.type == "dense") {
      e["outputs"] = l.outputs;
    } else if (l.type == "zeropad") {
      e["pad"] = l.pad;
    } else if (l.type == "reshape") {
      e["shape"] = l.shape;
    }
    layers.push_back(e);
  }
  json ns{{"enabled", c.ns.enabled}, {"folds", c.ns.folds}, {"mode", to_string(c.ns.mode)}};
  ns["beta_init"] = c.ns.beta_init ? json(*c.ns.beta_init) : json(nullptr);
  const RegularizerConfig& r = c.regularizer;
  json reg{{"kind", to_string(r.kind)},
           {"lambda", r.lambda},
           {"keep_rate", r.keep_rate},
           {"lrn", {{"size", r.lrn.size}, {"k", r.lrn.k}, {"alpha", r.lrn.alpha}, {"beta", r.lrn.beta}}}};
  json opt{{"kind", c.optimizer.kind},
           {"learning_rate", c.optimizer.learning_rate},
           {"beta1", c.optimizer.beta1},
           {"beta2", c.optimizer.beta2},
           {"epsilon", c.optimizer.epsilon}};
  const DataConfig& d = c.data;
  json data{{"dataset", d.dataset},
            {"root", d.root.string()},
            {"train_images", d.train_images.string()},
            {"train_labels", d.train_labels.string()},
            {"test_images", d.test_images.string()},
            {"test_labels", d.test_labels.string()},
            {"train_batches", paths_json(d.train_batches)},
            {"test_batches", paths_json(d.test_batches)},
            {"train_subset", d.train_subset},
            {"test_subset", d.test_subset},
            {"validation", d.validation},
            {"validation_seed", d.validation_seed},
            {"recombine", d.recombine}};
  data["normalization"] = d.normalization ? json(to_string(*d.normalization)) : json(nullptr);
  json j{{"name", c.name},
         {"preset", to_string(c.preset)},
         {"ns", ns},
         {"regularizer", reg},
         {"optimizer", opt},
         {"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"seed", c.seed},
         {"repeats", c.repeats},
         {"data", data},
         {"report", c.report == EvalReport::Final ? "final" : "best"},
         {"profile", c.profile}};
  if (c.preset == Preset::Custom) j["layers"] = layers;
  return j;
}

NetworkConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"name", "preset", "layers", "ns", "regularizer", "optimizer", "batch_size", "epochs",
                  "seed", "repeats", "data", "report", "profile"},
                 "config");
  std::string preset_name = "SimpleCNN";
  read(j, "preset", preset_name, "config");
  NetworkConfig c = preset_config(preset_from_string(preset_name));
  std::string profile;
  read(j, "profile", profile, "config");
  if (!profile.empty() && profile != "custom") apply_profile(c, profile);
  read(j, "name", c.name, "config");
  read(j, "batch_size", c.batch_size, "config");
  read(j, "epochs", c.epochs, "config");
  read(j, "seed", c.seed, "config");
  read(j, "repeats", c.repeats, "config");
  if (j.contains("report")) {
    std::string rep;
    read(j, "report", rep, "config");
    if (rep == "final") c.report = EvalReport::Final;
    else if (rep == "best") c.report = EvalReport::Best;
    else throw ConfigError("report must be final or best");
  }
  if (j.contains("layers")) {
    const json& ls = j.at("layers");
    if (!ls.is_array()) throw ConfigError("layers must be an array");
    for (std::size_t i = 0; i < ls.size(); ++i) {
      const std::string where = "layers[" + std::to_string(i) + "]";
      reject_unknown(ls[i], {"type", "outputs", "kernel", "padding", "bias", "pad", "shape"}, where);
      LayerSpec s;
      read(ls[i], "type", s.type, where);
      read(ls[i], "outputs", s.outputs, where);
      read(ls[i], "kernel", s.kernel, where);
      read(ls[i], "bias", s.bias, where);
      read(ls[i], "pad", s.pad, where);
      read(ls[i], "shape", s.shape, where);
      if (ls[i].contains("padding")) s.padding = conv_mode_from_string(ls[i].at("padding").get<std::string>());
      c.layers.push_back(s);
    }
  }
  if (j.contains("ns")) {
    const json& n = j.at("ns");
    reject_unknown(n, {"enabled", "folds", "mode", "beta_init"}, "ns");
    read(n, "enabled", c.ns.enabled, "ns");
    read(n, "folds", c.ns.folds, "ns");
    if (n.contains("mode")) c.ns.mode = ns_mode_from_string(n.at("mode").get<std::string>());
    if (n.contains("beta_init") && !n.at("beta_init").is_null()) {
      double b = 0.0;
      read(n, "beta_init", b, "ns");
      c.ns.beta_init = b;
    }
  }
  if (j.contains("regularizer")) {
    const json& r = j.at("regularizer");
    reject_unknown(r, {"kind", "lambda", "keep_rate", "lrn"}, "regularizer");
    if (r.contains("kind")) c.regularizer.kind = regularizer_from_string(r.at("kind").get<std::string>());
    read(r, "lambda", c.regularizer.lambda, "regularizer");
    read(r, "keep_rate", c.regularizer.keep_rate, "regularizer");
    if (r.contains("lrn")) {
      const json& l = r.at("lrn");
      reject_unknown(l, {"size", "k", "alpha", "beta"}, "regularizer.lrn");
      read(l, "size", c.regularizer.lrn.size, "regularizer.lrn");
      read(l, "k", c.regularizer.lrn.k, "regularizer.lrn");
      read(l, "alpha", c.regularizer.lrn.alpha, "regularizer.lrn");
      read(l, "beta", c.regularizer.lrn.beta, "regularizer.lrn");
    }
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o, {"kind", "learning_rate", "beta1", "beta2", "epsilon"}, "optimizer");
    read(o, "kind", c.optimizer.kind, "optimizer");
    read(o, "learning_rate", c.optimizer.learning_rate, "optimizer");
    read(o, "beta1", c.optimizer.beta1, "optimizer");
    read(o, "beta2", c.optimizer.beta2, "optimizer");
    read(o, "epsilon", c.optimizer.epsilon, "optimizer");
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d,
                   {"dataset", "root", "train_images", "train_labels", "test_images", "test_labels",
                    "train_batches", "test_batches", "train_subset", "test_subset", "validation",
                    "validation_seed", "recombine", "normalization"},
                   "data");
    DataConfig& dc = c.data;
    read(d, "dataset", dc.dataset, "data");
    dc.dataset = lower(dc.dataset);
    std::string s;
    auto path = [&](const char* key, fs::path& out) {
      s.clear();
      read(d, key, s, "data");
      if (!s.empty()) out = s;
    };
    path("root", dc.root);
    path("train_images", dc.train_images);
    path("train_labels", dc.train_labels);
    path("test_images", dc.test_images);
    path("test_labels", dc.test_labels);
    std::vector<std::string> batches;
    read(d, "train_batches", batches, "data");
    for (const auto& b : batches) dc.train_batches.emplace_back(b);
    batches.clear();
    read(d, "test_batches", batches, "data");
    for (const auto& b : batches) dc.test_batches.emplace_back(b);
    read(d, "train_subset", dc.train_subset, "data");
    read(d, "test_subset", dc.test_subset, "data");
    read(d, "validation", dc.validation, "data");
    read(d, "validation_seed", dc.validation_seed, "data");
    read(d, "recombine", dc.recombine, "data");
    if (d.contains("normalization") && !d.at("normalization").is_null())
      dc.normalization = normalization_from_string(d.at("normalization").get<std::string>());
  }
  validate(c);
  return c;
}

NetworkConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

fs::path data_root(const DataConfig& data) {
  if (!data.root.empty()) return data.root;
  if (const char* env = std::getenv("NSFOLD_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data";
}

}  // namespace nsfold
