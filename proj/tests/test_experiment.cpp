#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "fixture_data.hpp"
#include "nsfold/network.hpp"
#include "nsfold/trainer.hpp"

using namespace nsfold;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Writes the standard MNIST layout below a fresh root.
fs::path fixture_root() {
  static const fs::path root = [] {
    const fs::path r = fs::temp_directory_path() / "nsfold_test_experiment_data";
    fixture::write_mnist_fixture(r);
    return r;
  }();
  return root;
}

NetworkConfig small_config() {
  NetworkConfig c;
  c.name = "small";
  c.preset = Preset::Custom;
  c.layers = {{"dense", 32}, {"relu"}, {"dense", 10}};
  c.optimizer.learning_rate = 1e-2;
  c.batch_size = 25;
  c.epochs = 3;
  c.repeats = 2;
  c.seed = 5;
  c.data.root = fixture_root();
  return c;
}

RunOptions quiet(const fs::path& out = {}) {
  RunOptions o;
  o.output_root = out;
  return o;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Network, ParameterCounts) {
  EXPECT_EQ(build_network(preset_config(Preset::SimpleMLP)).trainable_parameter_count(),
            784u * 784u + 784u + 784u * 10u + 10u);
  EXPECT_EQ(build_network(preset_config(Preset::SimpleMLP)).trainable_parameter_count(), 623290u);

  const NetworkConfig base = preset_config(Preset::SimpleCNN);
  const std::size_t baseline = build_network(base).trainable_parameter_count();
  NetworkConfig fns = base;
  fns.ns.enabled = true;
  EXPECT_EQ(build_network(fns).trainable_parameter_count(), baseline);
  NetworkConfig tns = fns;
  tns.ns.mode = NsMode::Trainable;
  tns.ns.folds = 4;
  EXPECT_EQ(build_network(tns).trainable_parameter_count(), baseline + 4);

  NetworkConfig lenet = preset_config(Preset::LeNet5);
  const std::size_t lenet_base = build_network(lenet).trainable_parameter_count();
  lenet.ns = {true, 4, NsMode::Trainable, std::nullopt};
  EXPECT_EQ(build_network(lenet).trainable_parameter_count(), lenet_base + 4);
}

TEST(Network, NsChangesNoDenseShapes) {
  NetworkConfig base = preset_config(Preset::SimpleCNN), ns = base;
  ns.ns.enabled = true;
  ns.ns.mode = NsMode::Trainable;
  Model a = build_network(base), b = build_network(ns);
  std::vector<Shape> da, db;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.layer(i).kind() == "dense") da.push_back(a.layer(i).parameters()[0]->value.shape());
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b.layer(i).kind() == "dense") db.push_back(b.layer(i).parameters()[0]->value.shape());
  EXPECT_EQ(da, db);
  EXPECT_EQ(da.front(), (Shape{64 * 14 * 14, 1024}));
}

TEST(Network, IncompatibleFoldsRejected) {
  NetworkConfig c = preset_config(Preset::SimpleCNN);
  c.ns.enabled = true;
  c.ns.folds = 3;
  EXPECT_THROW(build_network(c), ConfigError);
  c = preset_config(Preset::LeNet5);
  c.ns.enabled = true;
  c.ns.folds = 5;
  EXPECT_THROW(build_network(c), ConfigError);
}

TEST(Network, PresetBetaDefaults) {
  EXPECT_EQ(default_beta(Preset::SimpleMLP, 2), 1.0);
  EXPECT_EQ(default_beta(Preset::SimpleCNN, 2), 0.25);
  EXPECT_EQ(default_beta(Preset::LeNet5, 2), 0.25);
  EXPECT_EQ(default_beta(Preset::LeNet5, 4), 0.10);
  EXPECT_EQ(default_beta(Preset::VGG16, 2), 0.02);
  NetworkConfig c = preset_config(Preset::SimpleCNN);
  c.ns.enabled = true;
  Model m = build_network(c);
  for (double b : m.layer(find_ns_layer(m)).parameters()[0]->value.values()) EXPECT_EQ(b, 0.25);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  for (Preset p : {Preset::SimpleMLP, Preset::SimpleCNN, Preset::LeNet5, Preset::VGG16}) {
    NetworkConfig c = preset_config(p);
    c.ns = {true, 2, NsMode::Trainable, 0.5};
    EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
  }
  const NetworkConfig custom = small_config();
  EXPECT_EQ(to_json(config_from_json(to_json(custom))), to_json(custom));
  nlohmann::json j = to_json(preset_config(Preset::SimpleCNN));
  j["batchsize"] = 10;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = to_json(preset_config(Preset::SimpleCNN));
  j["ns"]["fold"] = 2;
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, FilesAndProfiles) {
  const fs::path dir = fs::temp_directory_path() / "nsfold_test_config";
  fs::create_directories(dir);
  EXPECT_THROW(load_config(dir / "absent.json"), IoError);
  std::ofstream(dir / "bad.json") << "{ \"epochs\": ";
  EXPECT_THROW(load_config(dir / "bad.json"), FormatError);
  std::ofstream(dir / "ok.json") << "{ \"preset\": \"SimpleCNN\", \"profile\": \"desk\" }";
  const NetworkConfig c = load_config(dir / "ok.json");
  EXPECT_EQ(c.data.train_subset, 10000u);
  EXPECT_EQ(c.epochs, 10u);
  EXPECT_EQ(c.repeats, 5u);
  EXPECT_EQ(c.batch_size, 100u);
  EXPECT_EQ(c.optimizer.kind, "adam");
}

TEST(Aggregate, MeanStdFormatting) {
  EXPECT_EQ(format_mean_std(99.1234, 0.0456), "99.12±0.05");
  EXPECT_EQ(format_mean_std(95.0, std::nullopt), "95.00");
  EXPECT_FALSE(sample_std({97.5}).has_value());
  EXPECT_EQ(*sample_std({98.0, 98.0, 98.0}), 0.0);
  EXPECT_DOUBLE_EQ(*sample_std({1.0, 2.0, 3.0, 4.0}), std::sqrt(5.0 / 3.0));
}

TEST(Training, ZeroEpochsKeepsUntrainedAccuracy) {
  NetworkConfig c = small_config();
  c.epochs = 0;
  c.repeats = 1;
  const Datasets data = load_datasets(c);
  const RunResult r = run_experiment(c, data, quiet());
  Model untrained = build_network(c);
  const double chance = evaluate(untrained, data.test);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.trials[0].final_acc, chance);
  EXPECT_EQ(r.trials[0].initial_acc, chance);
  EXPECT_TRUE(r.trials[0].test_acc.empty());
  EXPECT_EQ(curves_csv(r), "trial,epoch,train_loss,test_acc\n");
}

TEST(Training, LearnsFixture) {
  NetworkConfig c = small_config();
  c.repeats = 1;
  c.epochs = 5;
  const RunResult r = run_experiment(c, quiet());
  EXPECT_GT(r.trials[0].final_acc, 90.0);
  EXPECT_LT(r.trials[0].train_loss.back(), r.trials[0].train_loss.front());
}

TEST(Training, DeterministicOutputs) {
  const fs::path out = fs::temp_directory_path() / "nsfold_test_runs";
  fs::remove_all(out);
  NetworkConfig c = small_config();
  c.ns = {true, 2, NsMode::Trainable, std::nullopt};
  c.regularizer.kind = Regularizer::Dropout;
  c.layers = {{"dense", 32}, {"relu"}, {"ns"}, {"dropout"}, {"dense", 10}};
  run_experiment(c, quiet(out));
  const std::string first = slurp(out / "small" / "curves.csv");
  run_experiment(c, quiet(out));
  const std::string second = slurp(out / "small" / "curves.csv");
  EXPECT_EQ(first, second);
  EXPECT_EQ(first.substr(0, first.find('\n')), "trial,epoch,train_loss,test_acc");
  EXPECT_EQ(count_lines(first), 1 + c.repeats * c.epochs);
}

TEST(Training, SummaryJson) {
  const fs::path out = fs::temp_directory_path() / "nsfold_test_summary";
  fs::remove_all(out);
  NetworkConfig c = small_config();
  c.repeats = 1;
  c.epochs = 1;
  c.name = "one";
  const RunResult one = run_experiment(c, quiet(out));
  auto j = nlohmann::json::parse(slurp(out / "one" / "summary.json"));
  EXPECT_FALSE(j.contains("std"));
  EXPECT_EQ(j["formatted"].get<std::string>().find("±"), std::string::npos);
  EXPECT_EQ(j["mean"].get<double>(), one.trials[0].final_acc);
  EXPECT_EQ(j["config"], to_json(c));

  c.repeats = 3;
  c.name = "three";
  const RunResult three = run_experiment(c, quiet(out));
  j = nlohmann::json::parse(slurp(out / "three" / "summary.json"));
  std::vector<double> finals;
  for (const auto& t : three.trials) finals.push_back(t.final_acc);
  double m = (finals[0] + finals[1] + finals[2]) / 3.0, s = 0.0;
  for (double f : finals) s += (f - m) * (f - m);
  EXPECT_NEAR(j["mean"].get<double>(), m, 1e-12);
  EXPECT_NEAR(j["std"].get<double>(), std::sqrt(s / 2.0), 1e-12);
  EXPECT_EQ(j["per_trial_final"].size(), 3u);
  EXPECT_EQ(j["trial_seeds"], nlohmann::json::array({5, 6, 7}));
}

TEST(Training, NonFiniteLossAborts) {
  NetworkConfig c = small_config();
  c.optimizer.kind = "sgd";
  c.optimizer.learning_rate = 1e300;
  const RunResult r = run_experiment(c, quiet());
  EXPECT_TRUE(r.partial);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_TRUE(r.trials[0].aborted);
  EXPECT_NE(r.trials[0].abort_reason.find("learning rate 1e+300"), std::string::npos) << r.trials[0].abort_reason;
  EXPECT_NE(r.trials[0].abort_reason.find("batch"), std::string::npos);
}

TEST(Training, MissingDataNamesPath) {
  NetworkConfig c = small_config();
  c.data.root = "/nonexistent/nsfold";
  try {
    load_datasets(c);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/nsfold"), std::string::npos) << e.what();
  }
}

TEST(Training, SubsetsAndValidation) {
  NetworkConfig c = small_config();
  c.data.train_subset = 200;
  c.data.test_subset = 50;
  c.data.validation = 40;
  c.data.recombine = false;
  const Datasets d = load_datasets(c);
  EXPECT_EQ(d.train.size(), 160u);
  EXPECT_EQ(d.validation.size(), 40u);
  EXPECT_EQ(d.test.size(), 50u);
  c.data.recombine = true;
  EXPECT_EQ(load_datasets(c).train.size(), 200u);
}

TEST(Training, UnwritableOutput) {
  NetworkConfig c = small_config();
  c.epochs = 0;
  c.repeats = 1;
  EXPECT_THROW(run_experiment(c, quiet("/proc/nsfold_runs")), IoError);
}

TEST(Config, ShippedConfigsBuild) {
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(NSFOLD_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    const NetworkConfig c = load_config(entry.path());
    EXPECT_EQ(c.name, entry.path().stem().string());
    EXPECT_NO_THROW(build_network(c)) << entry.path();
  }
  EXPECT_GE(seen, 5u);
}
