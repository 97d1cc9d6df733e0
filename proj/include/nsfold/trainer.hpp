#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nsfold/config.hpp"
#include "nsfold/dataset.hpp"
#include "nsfold/model.hpp"
#include "nsfold/optim.hpp"

namespace nsfold {

struct Datasets {
  Dataset train;
  Dataset test;
  /// Held-out split when validation is requested without recombining.
  Dataset validation;
};

/// Loads train and test sets as the config describes: explicit file paths
/// win over the dataset root; subsets, the validation split and the
/// normalization scheme are applied (statistics from the training part).
Datasets load_datasets(const NetworkConfig& config);

/// Percent of samples whose arg-max logit equals the label (eval phase).
double evaluate(Model& model, const Dataset& data, std::size_t batch_size = 500);

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config);

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;  // mean minibatch data loss per epoch
  std::vector<double> test_acc;    // percent, after each epoch
  std::vector<double> validation_acc;
  double initial_acc = 0.0;        // before the first update
  double final_acc = 0.0;
  double best_acc = 0.0;
  std::size_t best_epoch = 0;      // 1-based; 0 when no epoch ran
  double seconds = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

struct EpochEvent {
  std::size_t trial = 0;
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_acc = 0.0;
  double seconds = 0.0;
};
using ProgressFn = std::function<void(const EpochEvent&)>;

/// One trial: per-epoch seeded shuffle, minibatch forward/backward/update,
/// test accuracy after every epoch. A non-finite loss stops the trial and
/// records the epoch, batch index and learning rate in abort_reason.
TrialResult train(Model& model, const NetworkConfig& config, const Datasets& data,
                  std::uint64_t trial_seed, const ProgressFn& progress = {});

struct RunResult {
  NetworkConfig config;
  std::vector<TrialResult> trials;
  double mean = 0.0;                  // of the reported per-trial value
  std::optional<double> std;          // sample std, absent for one trial
  double mean_best = 0.0;
  double seconds = 0.0;
  std::size_t trainable_parameters = 0;
  bool partial = false;               // some trial aborted
};

/// Sample standard deviation (n - 1 divisor); absent for fewer than two values.
std::optional<double> sample_std(const std::vector<double>& values);
double mean_of(const std::vector<double>& values);

/// "mean±std" with two decimals, or just the mean when std is absent.
std::string format_mean_std(double mean, std::optional<double> std);

struct RunOptions {
  /// Where runs/<name>/ is created; empty writes nothing.
  std::filesystem::path output_root = "runs";
  ProgressFn progress;
  /// Called with each trained model before it is discarded.
  std::function<void(const Model&, const TrialResult&)> trial_done;
};

/// Runs config.repeats trials one after another (trial k is seeded with
/// config.seed + k) and writes curves.csv and summary.json.
RunResult run_experiment(const NetworkConfig& config, const Datasets& data, const RunOptions& options = {});
RunResult run_experiment(const NetworkConfig& config, const RunOptions& options = {});

/// Header trial,epoch,train_loss,test_acc and one row per trial and epoch.
/// Raises the malloc mmap and trim thresholds so large activation buffers are
/// recycled instead of returned to the kernel after every batch. Meant for
/// executables; it changes process-wide allocator settings.
void tune_allocator();

std::string curves_csv(const RunResult& result);
std::string summary_json(const RunResult& result);
void write_run(const RunResult& result, const std::filesystem::path& dir);

}  // namespace nsfold
