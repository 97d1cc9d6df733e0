#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nsfold/model.hpp"

namespace nsfold {

/// 8-bit binary PGM ("P5\n<w> <h>\n255\n" then h*w bytes) of one plane,
/// min-max scaled to 0..255 with rounding. A constant plane maps to 128.
std::string pgm_bytes(const double* plane, std::size_t height, std::size_t width);
void write_pgm(const std::filesystem::path& path, const double* plane, std::size_t height,
               std::size_t width);

struct NoiseReport {
  /// Estimated noise variance of every input copy.
  std::vector<double> input_noise;
  /// Noise variance of the superposed map.
  double superposed_noise = 0.0;
  /// superposed_noise / mean(input_noise); 0 when the copies carry no noise.
  double variance_ratio = 0.0;
};

/// Noise of the beta-weighted sum of N >= 2 copies of one signal, estimated
/// from the copies alone. The weights are normalized to sum to one (used as
/// given when they sum to zero), so the ratio compares maps on the signal's
/// scale. With S the plain mean of the copies and d_r = X_r - S, the pooled
/// per-copy noise variance is sigma^2 = mean_r var(d_r) * N / (N - 1) and
///     var(sum_r w_r e_r) = var(sum_r w_r d_r) + sigma^2 / N,
/// both unbiased for independent, equal-variance noise. Hence the ratio is
/// sum_r w_r^2 in expectation, exactly 1/N for equal weights and exactly 1
/// for one-hot weights. Variances are taken over the pixels.
NoiseReport noise_metric(const std::vector<Tensor>& copies, std::span<const double> beta);

/// Same quantities when the clean signal is known: noise is X_r - reference.
NoiseReport noise_metric(const std::vector<Tensor>& copies, std::span<const double> beta,
                         const Tensor& reference);

/// Splits a t x h x w stack into its N blocks of t/N consecutive channels.
std::vector<Tensor> fold_blocks(const Tensor& maps, std::size_t folds);

struct FeatureExport {
  std::size_t layer = 0;   // index of the layer whose input was exported
  std::size_t folds = 0;
  std::vector<double> beta;
  std::vector<std::filesystem::path> files;
  NoiseReport noise;       // over the N raw blocks
};

struct ExportOptions {
  /// Replaces the coefficients of the NS layer (or supplies them when the
  /// model has none); its length sets N in that case.
  std::vector<double> beta;
  /// Folds used when the model has no NS layer and no beta is given.
  std::size_t folds = 2;
};

/// Runs one image (c x h x w, no batch axis) through `model` in eval mode and
/// exports the feature maps that enter the NS layer, or the last 3-D
/// activation ahead of the classifier when there is none. Writes one PGM per
/// raw map, per superposed map and per channel of the replicated block:
///     layer<i>_ch<c>_raw.pgm, layer<i>_ch<l>_superposed.pgm,
///     layer<i>_ch<c>_replicated.pgm
/// Throws ConfigError when the model has no convolution layer and IoError
/// when `dir` cannot be written.
FeatureExport export_feature_maps(const Model& model, const Tensor& image,
                                  const std::filesystem::path& dir, const ExportOptions& options = {});

}  // namespace nsfold
