#include "nsfold/features.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "nsfold/error.hpp"
#include "nsfold/ns_layer.hpp"

namespace nsfold {

namespace fs = std::filesystem;

namespace {

double variance(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

std::vector<double> normalized_weights(std::span<const double> beta) {
  const double total = std::accumulate(beta.begin(), beta.end(), 0.0);
  std::vector<double> w(beta.begin(), beta.end());
  if (total != 0.0)
    for (double& x : w) x /= total;
  return w;
}

void check_copies(const std::vector<Tensor>& copies, std::span<const double> beta) {
  if (copies.size() < 2) throw ConfigError("noise_metric needs at least two copies");
  if (beta.size() != copies.size()) {
    throw ConfigError("noise_metric: " + std::to_string(beta.size()) + " coefficients for " +
                      std::to_string(copies.size()) + " copies");
  }
  for (const Tensor& c : copies)
    if (c.numel() != copies[0].numel()) throw DimensionError("noise_metric: copies differ in size");
}

double ratio(double superposed, const std::vector<double>& inputs) {
  const double mean = std::accumulate(inputs.begin(), inputs.end(), 0.0) / static_cast<double>(inputs.size());
  return mean > 0.0 ? superposed / mean : 0.0;
}

std::string name(std::size_t layer, std::size_t channel, const char* stage) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "layer%02zu_ch%03zu_%s.pgm", layer, channel, stage);
  return buf;
}

}  // namespace

std::string pgm_bytes(const double* plane, std::size_t height, std::size_t width) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t n = height * width;
  double lo = n ? plane[0] : 0.0, hi = lo;
  for (std::size_t i = 0; i < n; ++i) {
    lo = std::min(lo, plane[i]);
    hi = std::max(hi, plane[i]);
  }
  out.reserve(out.size() + n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = hi > lo ? std::round(255.0 * (plane[i] - lo) / (hi - lo)) : 128.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return out;
}

void write_pgm(const fs::path& path, const double* plane, std::size_t height, std::size_t width) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << pgm_bytes(plane, height, width);
  if (!out) throw IoError("write failed: " + path.string());
}

NoiseReport noise_metric(const std::vector<Tensor>& copies, std::span<const double> beta) {
  check_copies(copies, beta);
  const std::size_t n = copies.size(), pixels = copies[0].numel();
  const std::vector<double> w = normalized_weights(beta);
  std::vector<std::vector<double>> d(n, std::vector<double>(pixels));
  std::vector<double> mixed(pixels, 0.0);
  for (std::size_t p = 0; p < pixels; ++p) {
    double mean = 0.0;
    for (const Tensor& c : copies) mean += c[p];
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      d[r][p] = copies[r][p] - mean;
      mixed[p] += w[r] * d[r][p];
    }
  }
  double pooled = 0.0;
  std::vector<double> residual(n);
  for (std::size_t r = 0; r < n; ++r) {
    residual[r] = variance(d[r]);
    pooled += residual[r];
  }
  const double scale = static_cast<double>(n) / static_cast<double>(n - 1);
  const double sigma2 = pooled / static_cast<double>(n) * scale;

  NoiseReport report;
  for (std::size_t r = 0; r < n; ++r) report.input_noise.push_back(residual[r] * scale);
  report.superposed_noise = variance(mixed) + sigma2 / static_cast<double>(n);
  report.variance_ratio = sigma2 > 0.0 ? report.superposed_noise / sigma2 : 0.0;
  return report;
}

NoiseReport noise_metric(const std::vector<Tensor>& copies, std::span<const double> beta,
                         const Tensor& reference) {
  check_copies(copies, beta);
  if (reference.numel() != copies[0].numel()) throw DimensionError("noise_metric: reference size differs");
  const std::size_t n = copies.size(), pixels = reference.numel();
  const std::vector<double> w = normalized_weights(beta);
  NoiseReport report;
  std::vector<double> mixed(pixels, 0.0), e(pixels);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t p = 0; p < pixels; ++p) {
      e[p] = copies[r][p] - reference[p];
      mixed[p] += w[r] * e[p];
    }
    report.input_noise.push_back(variance(e));
  }
  report.superposed_noise = variance(mixed);
  report.variance_ratio = ratio(report.superposed_noise, report.input_noise);
  return report;
}

std::vector<Tensor> fold_blocks(const Tensor& maps, std::size_t folds) {
  if (maps.rank() < 1 || folds == 0 || maps.dim(0) % folds != 0) {
    throw ConfigError(std::to_string(folds) + " folds do not divide the maps of " + shape_string(maps.shape()));
  }
  Shape block = maps.shape();
  block[0] /= folds;
  const std::size_t size = shape_numel(block);
  std::vector<Tensor> out;
  for (std::size_t r = 0; r < folds; ++r)
    out.emplace_back(block, std::vector<double>(maps.data() + r * size, maps.data() + (r + 1) * size));
  return out;
}

FeatureExport export_feature_maps(const Model& model, const Tensor& image, const fs::path& dir,
                                  const ExportOptions& options) {
  bool has_conv = false;
  for (std::size_t i = 0; i < model.size(); ++i) has_conv = has_conv || model.layer(i).kind() == "conv2d";
  if (!has_conv) throw ConfigError("feature-map export needs a model with a convolution layer");
  if (image.shape() != model.input_shape()) {
    throw DimensionError("image " + shape_string(image.shape()) + " does not match model input " +
                         shape_string(model.input_shape()));
  }

  Model copy = model;
  Shape batch_shape{1};
  batch_shape.insert(batch_shape.end(), image.shape().begin(), image.shape().end());
  Tensor x = image.reshaped(batch_shape);

  FeatureExport result;
  result.layer = copy.size();
  const NsLayer* ns = nullptr;
  for (std::size_t i = 0; i < copy.size(); ++i) {
    Layer& layer = copy.layer(i);
    if (layer.kind() == "ns" && x.rank() == 4) {
      result.layer = i;
      ns = static_cast<const NsLayer*>(&layer);
      break;
    }
    const Shape out = layer.output_shape(Shape(x.shape().begin() + 1, x.shape().end()));
    if (x.rank() == 4 && out.size() == 1) {
      result.layer = i;
      break;
    }
    x = layer.forward(x, Phase::Eval);
  }
  if (result.layer == copy.size() || x.rank() != 4) {
    throw ConfigError("no stack of 2-D feature maps reaches the classifier");
  }

  if (!options.beta.empty()) {
    result.beta = options.beta;
  } else if (ns) {
    result.beta.assign(ns->beta().begin(), ns->beta().end());
  } else {
    result.beta.assign(options.folds, 1.0 / static_cast<double>(options.folds));
  }
  result.folds = result.beta.size();
  const Tensor maps = x.reshaped({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t t = maps.dim(0), h = maps.dim(1), w = maps.dim(2), plane = h * w;
  if (result.folds < 2 || t % result.folds != 0) {
    throw ConfigError(std::to_string(result.folds) + " folds do not divide " + std::to_string(t) + " feature maps");
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const Tensor replicated = ns_forward(maps, result.beta);
  const std::size_t s = t / result.folds;
  auto emit = [&](const double* data, std::size_t channel, const char* stage) {
    const fs::path path = dir / name(result.layer, channel, stage);
    write_pgm(path, data, h, w);
    result.files.push_back(path);
  };
  for (std::size_t c = 0; c < t; ++c) emit(maps.data() + c * plane, c, "raw");
  for (std::size_t l = 0; l < s; ++l) emit(replicated.data() + l * plane, l, "superposed");
  for (std::size_t c = 0; c < t; ++c) emit(replicated.data() + c * plane, c, "replicated");

  result.noise = noise_metric(fold_blocks(maps, result.folds), result.beta);
  return result;
}

}  // namespace nsfold
