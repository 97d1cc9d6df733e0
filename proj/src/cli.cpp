#include "nsfold/cli.hpp"

#include <cstdio>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "nsfold/audit.hpp"
#include "nsfold/checkpoint.hpp"
#include "nsfold/features.hpp"
#include "nsfold/minima.hpp"
#include "nsfold/network.hpp"
#include "nsfold/trainer.hpp"

namespace nsfold {

namespace fs = std::filesystem;

namespace {

std::vector<double> parse_csv(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("not a number in list '" + text + "': '" + item + "'");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError("empty number list");
  return values;
}

struct TrainArgs {
  std::string config;
  std::string profile;
  bool full = false;
  std::string out = "runs";
  std::string data_root;
  bool quiet = false;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  NetworkConfig config = load_config(a.config);
  if (a.full) apply_profile(config, "full");
  else if (!a.profile.empty()) apply_profile(config, a.profile);
  if (!a.data_root.empty()) config.data.root = a.data_root;
  const Datasets data = load_datasets(config);

  RunOptions options;
  options.output_root = a.out;
  if (!a.quiet)
    options.progress = [&out](const EpochEvent& e) {
      char line[160];
      std::snprintf(line, sizeof line, "trial %zu epoch %3zu  loss %.5f  test %.2f%%  (%.1fs)\n", e.trial,
                    e.epoch, e.train_loss, e.test_acc, e.seconds);
      out << line << std::flush;
    };
  const fs::path dir = fs::path(a.out) / config.name;
  options.trial_done = [&](const Model& model, const TrialResult& t) {
    if (t.aborted) return;
    fs::create_directories(dir);
    save_checkpoint(model, dir / "model.ckpt", &config, t.seed);
  };
  const RunResult r = run_experiment(config, data, options);

  out << config.name << ": " << format_mean_std(r.mean, r.std) << " (" << r.trials.size() << " trials, "
      << r.trainable_parameters << " trainable parameters, " << static_cast<long>(r.seconds) << " s)\n";
  out << "wrote " << (dir / "curves.csv").string() << ", " << (dir / "summary.json").string() << "\n";
  for (const TrialResult& t : r.trials)
    if (t.aborted) out << "trial " << t.trial << " aborted: " << t.abort_reason << "\n";
  return r.partial ? kExitValidation : kExitOk;
}

struct GradArgs {
  std::string preset;
  std::string ns = "tns";
  std::size_t folds = 2;
  double tol = 1e-5;
  std::uint64_t seed = 1;
  std::size_t seeds = 20;
  std::size_t coords = 24;
};

int run_gradcheck(const GradArgs& a, std::ostream& out) {
  if (!a.preset.empty()) {
    NetworkConfig c = preset_config(preset_from_string(a.preset));
    c.ns.enabled = a.ns != "none";
    c.ns.mode = a.ns == "fns" ? NsMode::Fixed : NsMode::Trainable;
    c.ns.folds = a.folds;
    const GradReport r = run_audit(preset_audit_case(c, a.seed, 2, a.coords), a.tol);
    out << c.name << " (ns " << a.ns << ", seed " << a.seed << ")\n" << format_report(r);
    return r.passed ? kExitOk : kExitValidation;
  }
  bool all = true;
  char line[200];
  for (const std::string& name : audit_combinations()) {
    std::size_t passed = 0;
    double worst = 0.0;
    std::string failing;
    for (std::uint64_t s = a.seed; s < a.seed + a.seeds; ++s) {
      const GradReport r = run_audit(audit_case(name, s), a.tol);
      if (r.passed) ++passed;
      else if (failing.empty()) failing = format_report(r);
      if (r.worst() != nullptr) worst = std::max(worst, r.worst()->max_rel_error);
    }
    std::snprintf(line, sizeof line, "%-22s %2zu/%zu seeds  max rel error %.3e\n", name.c_str(), passed, a.seeds,
                  worst);
    out << line << failing;
    all = all && passed == a.seeds;
  }
  out << (all ? "PASS" : "FAIL") << "\n";
  return all ? kExitOk : kExitValidation;
}

int run_minima(std::size_t t, std::size_t n, const std::string& beta_text, std::uint64_t seed, std::ostream& out) {
  const std::vector<double> beta = parse_csv(beta_text);
  const MinimaComparison c = compare_minima_spaces(t, n, beta, seed);
  out << format_comparison(c) << comparison_json(c) << "\n";
  return kExitOk;
}

/// The config stored with a checkpoint, or defaults for `dataset`.
NetworkConfig eval_config(const Checkpoint& ck, const std::string& dataset, const std::string& root) {
  NetworkConfig c = ck.config.value_or(NetworkConfig{});
  if (!dataset.empty()) {
    if (dataset != c.data.dataset) c.data = DataConfig{};
    c.data.dataset = dataset;
  }
  c.data.test_subset = 0;
  c.data.validation = 0;
  if (!root.empty()) c.data.root = root;
  return c;
}

struct ExportArgs {
  std::string checkpoint;
  std::size_t image_index = 0;
  std::string beta;
  std::size_t folds = 2;
  std::string out = "fm_export";
  std::string dataset;
  std::string data_root;
};

int run_export(const ExportArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Datasets data = load_datasets(eval_config(ck, a.dataset, a.data_root));
  if (a.image_index >= data.test.size())
    throw ConfigError("--image-index " + std::to_string(a.image_index) + " is past the " +
                      std::to_string(data.test.size()) + " test images");
  const Shape sample = data.test.sample_shape();
  const std::size_t n = shape_numel(sample);
  Tensor image(sample);
  std::copy_n(data.test.images.data() + a.image_index * n, n, image.data());

  ExportOptions options;
  if (!a.beta.empty()) options.beta = parse_csv(a.beta);
  options.folds = a.folds;
  const FeatureExport e = export_feature_maps(ck.model, image, a.out, options);
  out << "image " << a.image_index << " (label " << int(data.test.labels[a.image_index]) << "), layer " << e.layer
      << ", N = " << e.folds << ", beta";
  for (double b : e.beta) out << " " << b;
  out << "\nwrote " << e.files.size() << " PGM files to " << a.out << "\n";
  char line[160];
  for (std::size_t r = 0; r < e.noise.input_noise.size(); ++r) {
    std::snprintf(line, sizeof line, "block %zu noise variance  %.6e\n", r, e.noise.input_noise[r]);
    out << line;
  }
  std::snprintf(line, sizeof line, "superposed noise variance %.6e\nvariance ratio            %.4f\n",
                e.noise.superposed_noise, e.noise.variance_ratio);
  out << line;
  return kExitOk;
}

int run_eval(const std::string& checkpoint, const std::string& dataset, const std::string& root,
             std::size_t subset, std::ostream& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  NetworkConfig c = eval_config(ck, dataset, root);
  c.data.test_subset = subset;
  const Datasets data = load_datasets(c);
  const double acc = evaluate(ck.model, data.test);
  char line[160];
  std::snprintf(line, sizeof line, "%s test accuracy %.2f%% on %zu images\n", c.data.dataset.c_str(), acc,
                data.test.size());
  out << line;
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"N-fold superposition experiments"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Run repeated training trials from a JSON config");
  train_cmd->add_option("--config", train.config, "Config file")->required();
  train_cmd->add_option("--profile", train.profile, "desk, full or smoke");
  train_cmd->add_flag("--full", train.full, "Full-data protocol (60k images, 100 epochs)");
  train_cmd->add_option("--out", train.out, "Output root")->capture_default_str();
  train_cmd->add_option("--data-root", train.data_root, "Dataset root");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch lines");

  GradArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Audit analytic gradients against finite differences");
  grad_cmd->add_option("--preset", grad.preset, "Audit one preset instead of the layer combinations");
  grad_cmd->add_option("--ns", grad.ns, "none, fns or tns (presets)")
      ->check(CLI::IsMember({"none", "fns", "tns"}))
      ->capture_default_str();
  grad_cmd->add_option("--folds", grad.folds, "N for presets")->capture_default_str();
  grad_cmd->add_option("--tol", grad.tol, "Relative error tolerance")->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed, "First seed")->capture_default_str();
  grad_cmd->add_option("--seeds", grad.seeds, "Seeds per combination")->capture_default_str();
  grad_cmd->add_option("--coords", grad.coords, "Sampled coordinates per preset tensor")->capture_default_str();

  std::size_t t = 0, n = 0;
  std::string beta;
  std::uint64_t minima_seed = 1;
  auto* minima_cmd = app.add_subcommand("minima-verify", "Compare stationary-point systems with and without folds");
  minima_cmd->add_option("--t", t, "Feature maps")->required();
  minima_cmd->add_option("--n", n, "Folds")->required();
  minima_cmd->add_option("--beta", beta, "Comma-separated coefficients")->required();
  minima_cmd->add_option("--seed", minima_seed, "Seed for the sampled points")->capture_default_str();

  ExportArgs fm;
  auto* fm_cmd = app.add_subcommand("fm-export", "Write feature maps of one test image as PGM files");
  fm_cmd->add_option("--checkpoint", fm.checkpoint, "Checkpoint file")->required();
  fm_cmd->add_option("--image-index", fm.image_index, "Test image")->capture_default_str();
  fm_cmd->add_option("--beta", fm.beta, "Comma-separated coefficients overriding the model's");
  fm_cmd->add_option("--folds", fm.folds, "N when the model has no NS layer")->capture_default_str();
  fm_cmd->add_option("--out", fm.out, "Output directory")->capture_default_str();
  fm_cmd->add_option("--dataset", fm.dataset, "mnist or cifar10");
  fm_cmd->add_option("--data-root", fm.data_root, "Dataset root");

  std::string eval_ckpt, eval_dataset, eval_root;
  std::size_t eval_subset = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Test accuracy of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "mnist or cifar10");
  eval_cmd->add_option("--data-root", eval_root, "Dataset root");
  eval_cmd->add_option("--subset", eval_subset, "First n test images (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (e.get_exit_code() != 0) {
      const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
      err << sub->help();
    }
    return kExitValidation;
  }

  try {
    if (*train_cmd) return run_train(train, out);
    if (*grad_cmd) return run_gradcheck(grad, out);
    if (*minima_cmd) return run_minima(t, n, beta, minima_seed, out);
    if (*fm_cmd) return run_export(fm, out);
    return run_eval(eval_ckpt, eval_dataset, eval_root, eval_subset, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace nsfold
