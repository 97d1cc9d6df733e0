#include "nsfold/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <malloc.h>
#include <numeric>

#include <json.hpp>

#include "nsfold/loss.hpp"
#include "nsfold/network.hpp"

namespace nsfold {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Dataset load_split(const NetworkConfig& config, bool train) {
  const DataConfig& d = config.data;
  if (d.dataset == "mnist") {
    const fs::path& images = train ? d.train_images : d.test_images;
    const fs::path& labels = train ? d.train_labels : d.test_labels;
    if (!images.empty() || !labels.empty()) {
      if (images.empty() || labels.empty())
        throw ConfigError("MNIST file overrides need both images and labels");
      return load_mnist(images, labels);
    }
    return load_mnist_split(data_root(d), train);
  }
  const std::vector<fs::path>& batches = train ? d.train_batches : d.test_batches;
  if (!batches.empty()) return load_cifar10(batches);
  return load_cifar10_split(data_root(d), train);
}

// Copies rows order[begin, end) of ds into a batch.
void fill_batch(const Dataset& ds, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                Tensor& images, std::vector<std::uint8_t>& labels) {
  const Shape s = ds.sample_shape();
  const std::size_t per = shape_numel(s);
  Shape shape{end - begin};
  shape.insert(shape.end(), s.begin(), s.end());
  if (images.shape() != shape) images = Tensor(shape);
  labels.resize(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t k = order[i];
    std::copy(ds.images.data() + k * per, ds.images.data() + (k + 1) * per, images.data() + (i - begin) * per);
    labels[i - begin] = ds.labels[k];
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

Datasets load_datasets(const NetworkConfig& config) {
  validate(config);
  const DataConfig& d = config.data;
  Datasets out;
  Dataset train = subset(load_split(config, true), d.train_subset);
  out.test = subset(load_split(config, false), d.test_subset);
  if (d.validation > 0) {
    SplitSpec spec;
    spec.count = d.validation;
    spec.seed = d.validation_seed;
    spec.recombine = d.recombine;
    Split split = split_validation(train, spec);
    out.validation = std::move(split.validation);
    if (!d.recombine) train = std::move(split.train);
  }
  out.train = std::move(train);
  const Normalization scheme =
      d.normalization.value_or(d.dataset == "mnist" ? Normalization::Unit : Normalization::PerChannelStandard);
  if (scheme != Normalization::Unit) {
    const ChannelStats stats = channel_stats(out.train);
    out.train = normalize(out.train, scheme, stats);
    out.test = normalize(out.test, scheme, stats);
    if (out.validation.size() > 0) out.validation = normalize(out.validation, scheme, stats);
  }
  const Shape expected = dataset_input_shape(d.dataset);
  if (out.train.sample_shape() != expected || out.test.sample_shape() != expected)
    throw DataError("images are " + shape_string(out.train.sample_shape()) + ", the " + d.dataset +
                    " networks expect " + shape_string(expected));
  return out;
}

double evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Tensor images;
  std::vector<std::uint8_t> labels;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    fill_batch(data, order, begin, end, images, labels);
    const Tensor logits = model.forward(images, Phase::Eval);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (argmax_row(logits, i) == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& c) {
  if (c.kind == "sgd") return std::make_unique<Sgd>(SgdConfig{c.learning_rate});
  if (c.kind == "adam") return std::make_unique<Adam>(AdamConfig{c.learning_rate, c.beta1, c.beta2, c.epsilon});
  throw ConfigError("unknown optimizer '" + c.kind + "'");
}

TrialResult train(Model& model, const NetworkConfig& config, const Datasets& data, std::uint64_t trial_seed,
                  const ProgressFn& progress) {
  const auto start = std::chrono::steady_clock::now();
  TrialResult r;
  r.seed = trial_seed;
  Rng shuffle = Rng(trial_seed).split(streams::kShuffle);
  std::unique_ptr<Optimizer> opt = make_optimizer(config.optimizer);
  const std::vector<Parameter*> trainable = model.trainable_parameters();
  const bool l2 = config.regularizer.kind == Regularizer::L2;

  r.initial_acc = evaluate(model, data.test);
  r.final_acc = r.best_acc = r.initial_acc;

  const std::size_t n = data.train.size();
  if (n == 0 && config.epochs > 0) throw DataError("training set is empty");
  std::vector<std::size_t> order(n);
  Tensor images;
  std::vector<std::uint8_t> labels;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    shuffle.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++batches) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      fill_batch(data.train, order, begin, end, images, labels);
      const Tensor logits = model.forward(images, Phase::Train);
      BatchLoss loss = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss)) {
        r.aborted = true;
        r.abort_reason = "non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batches) + " (learning rate " + fmt("%g", opt->learning_rate()) + ")";
        r.seconds = seconds_since(start);
        return r;
      }
      model.zero_grad();
      model.backward(loss.grad);
      if (l2) apply_l2_penalty(trainable, config.regularizer.lambda);
      opt->step(trainable);
      loss_sum += loss.loss;
    }
    const double train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    const double acc = evaluate(model, data.test);
    r.train_loss.push_back(train_loss);
    r.test_acc.push_back(acc);
    if (data.validation.size() > 0) r.validation_acc.push_back(evaluate(model, data.validation));
    r.final_acc = acc;
    if (epoch == 1 || acc > r.best_acc) {
      r.best_acc = acc;
      r.best_epoch = epoch;
    }
    if (progress) progress({0, epoch, train_loss, acc, seconds_since(epoch_start)});
  }
  r.seconds = seconds_since(start);
  return r;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::optional<double> sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return std::nullopt;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string format_mean_std(double mean, std::optional<double> std) {
  char buf[64];
  if (std) std::snprintf(buf, sizeof buf, "%.2f±%.2f", mean, *std);
  else std::snprintf(buf, sizeof buf, "%.2f", mean);
  return buf;
}

RunResult run_experiment(const NetworkConfig& config, const Datasets& data, const RunOptions& options) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  result.config = config;
  for (std::size_t k = 0; k < config.repeats; ++k) {
    const std::uint64_t seed = config.seed + k;
    const Rng root(seed);
    Model model = build_network(config, root.split(streams::kInit), root.split(streams::kDropout));
    result.trainable_parameters = model.trainable_parameter_count();
    ProgressFn progress;
    if (options.progress) {
      progress = [&](const EpochEvent& e) {
        EpochEvent tagged = e;
        tagged.trial = k;
        options.progress(tagged);
      };
    }
    TrialResult t = train(model, config, data, seed, progress);
    t.trial = k;
    if (options.trial_done) options.trial_done(model, t);
    result.partial = result.partial || t.aborted;
    result.trials.push_back(std::move(t));
    if (result.partial) break;
  }
  std::vector<double> reported, best;
  for (const TrialResult& t : result.trials) {
    reported.push_back(config.report == EvalReport::Final ? t.final_acc : t.best_acc);
    best.push_back(t.best_acc);
  }
  result.mean = mean_of(reported);
  result.std = sample_std(reported);
  result.mean_best = mean_of(best);
  result.seconds = seconds_since(start);
  if (!options.output_root.empty()) write_run(result, options.output_root / config.name);
  return result;
}

RunResult run_experiment(const NetworkConfig& config, const RunOptions& options) {
  return run_experiment(config, load_datasets(config), options);
}

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
}

std::string curves_csv(const RunResult& result) {
  std::string out = "trial,epoch,train_loss,test_acc\n";
  char line[128];
  for (const TrialResult& t : result.trials)
    for (std::size_t e = 0; e < t.test_acc.size(); ++e) {
      std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%.17g\n", t.trial, e + 1, t.train_loss[e], t.test_acc[e]);
      out += line;
    }
  return out;
}

std::string summary_json(const RunResult& result) {
  nlohmann::json j;
  j["name"] = result.config.name;
  j["report"] = result.config.report == EvalReport::Final ? "final" : "best";
  j["mean"] = result.mean;
  if (result.std) j["std"] = *result.std;
  j["formatted"] = format_mean_std(result.mean, result.std);
  j["mean_best"] = result.mean_best;
  nlohmann::json finals = nlohmann::json::array(), bests = nlohmann::json::array(),
                 seeds = nlohmann::json::array(), aborted = nlohmann::json::array();
  for (const TrialResult& t : result.trials) {
    finals.push_back(t.final_acc);
    bests.push_back(t.best_acc);
    seeds.push_back(t.seed);
    if (t.aborted) aborted.push_back({{"trial", t.trial}, {"reason", t.abort_reason}});
  }
  j["per_trial_final"] = finals;
  j["per_trial_best"] = bests;
  j["trial_seeds"] = seeds;
  j["trials"] = result.trials.size();
  j["partial"] = result.partial;
  if (!aborted.empty()) j["aborted"] = aborted;
  if (!result.trials.empty() && !result.trials[0].validation_acc.empty()) {
    nlohmann::json val = nlohmann::json::array();
    for (const TrialResult& t : result.trials) val.push_back(t.validation_acc.back());
    j["per_trial_validation_final"] = val;
  }
  j["trainable_parameters"] = result.trainable_parameters;
  j["wall_seconds"] = result.seconds;
  j["config"] = to_json(result.config);
  return j.dump(2) + "\n";
}

void write_run(const RunResult& result, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [name, text] : {std::pair<std::string, std::string>{"curves.csv", curves_csv(result)},
                                   {"summary.json", summary_json(result)}}) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    out << text;
    if (!out) throw IoError("write failed: " + (dir / name).string());
  }
}

}  // namespace nsfold
