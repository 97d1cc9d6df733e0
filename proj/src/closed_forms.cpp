#include "nsfold/closed_forms.hpp"

#include "nsfold/error.hpp"
#include "nsfold/loss.hpp"

namespace nsfold {

std::size_t ToyModel::map_pixels() const {
  return (input.dim(0) - kernels.dim(1) + 1) * (input.dim(1) - kernels.dim(2) + 1);
}

void validate_toy(const ToyModel& toy) {
  if (toy.input.rank() != 2 || toy.kernels.rank() != 3 || toy.weights.rank() != 2) {
    throw ConfigError("toy model needs a v x u input, t x m x n kernels and a 2-D weight matrix");
  }
  if (toy.kernels.dim(1) > toy.input.dim(0) || toy.kernels.dim(2) > toy.input.dim(1)) {
    throw ConfigError("toy model kernels " + shape_string(toy.kernels.shape()) +
                      " do not fit the input " + shape_string(toy.input.shape()));
  }
  const std::size_t features = toy.maps() * toy.map_pixels();
  if (toy.weights.dim(0) != features) {
    throw ConfigError("toy model weights " + shape_string(toy.weights.shape()) + " need " +
                      std::to_string(features) + " rows");
  }
  if (toy.label >= toy.classes()) throw ConfigError("toy model label out of range");
  if (toy.superposed() && toy.maps() % toy.beta.size() != 0) {
    throw ConfigError("toy model: N = " + std::to_string(toy.beta.size()) +
                      " does not divide t = " + std::to_string(toy.maps()));
  }
}

namespace {

Tensor kernel_slice(const Tensor& kernels, std::size_t j) {
  const std::size_t m = kernels.dim(1), n = kernels.dim(2);
  return Tensor({m, n}, std::vector<double>(kernels.data() + j * m * n,
                                            kernels.data() + (j + 1) * m * n));
}

// dL/dC^j as a w-vector: sum_o (p_o - [o == label]) W_{slice j, o}
std::vector<double> slice_error(const ToyModel& toy, const Tensor& probs, std::size_t j) {
  const std::size_t w = toy.map_pixels(), classes = toy.classes();
  std::vector<double> g(w, 0.0);
  for (std::size_t q = 0; q < w; ++q) {
    const double* row = toy.weights.data() + (j * w + q) * classes;
    double acc = -row[toy.label];
    for (std::size_t o = 0; o < classes; ++o) acc += probs[o] * row[o];
    g[q] = acc;
  }
  return g;
}

Tensor kernel_grad_from_map_error(const ToyModel& toy, const std::vector<double>& g,
                                  double scale) {
  const std::size_t oh = toy.input.dim(0) - toy.kernels.dim(1) + 1;
  const std::size_t ow = toy.input.dim(1) - toy.kernels.dim(2) + 1;
  Tensor map_error({oh, ow}, g);
  // dI/dK contracted with the map error is a valid cross-correlation of the
  // input with that error.
  return scale * conv2d(toy.input, map_error, ConvMode::Valid);
}

Tensor kernel_grad(const ToyModel& toy, std::size_t j, bool with_beta) {
  validate_toy(toy);
  if (j >= toy.maps()) {
    throw DimensionError("kernel index " + std::to_string(j) + " out of range for " +
                         std::to_string(toy.maps()) + " kernels");
  }
  const Tensor probs = softmax(toy_logits(toy));
  if (!toy.superposed()) return kernel_grad_from_map_error(toy, slice_error(toy, probs, j), 1.0);

  const std::size_t folds = toy.beta.size();
  const std::size_t s = toy.maps() / folds;
  const std::size_t l = j % s, k = j / s;
  std::vector<double> g(toy.map_pixels(), 0.0);
  for (std::size_t r = 0; r < folds; ++r) {
    const std::vector<double> part = slice_error(toy, probs, l + r * s);
    for (std::size_t q = 0; q < g.size(); ++q) g[q] += part[q];
  }
  return kernel_grad_from_map_error(toy, g, with_beta ? toy.beta[k] : 1.0);
}

}  // namespace

Tensor toy_feature_maps(const ToyModel& toy) {
  validate_toy(toy);
  const std::size_t t = toy.maps();
  const std::size_t oh = toy.input.dim(0) - toy.kernels.dim(1) + 1;
  const std::size_t ow = toy.input.dim(1) - toy.kernels.dim(2) + 1;
  Tensor maps({t, oh, ow});
  for (std::size_t j = 0; j < t; ++j) {
    const Tensor plane = conv2d(toy.input, kernel_slice(toy.kernels, j), ConvMode::Valid);
    std::copy(plane.values().begin(), plane.values().end(), maps.data() + j * oh * ow);
  }
  return maps;
}

Tensor toy_fc_input(const ToyModel& toy) {
  const Tensor maps = toy_feature_maps(toy);
  const std::size_t t = toy.maps(), w = toy.map_pixels();
  if (!toy.superposed()) return maps.reshaped({1, t * w});
  const std::size_t folds = toy.beta.size(), s = t / folds;
  Tensor c({1, t * w});
  for (std::size_t l = 0; l < s; ++l) {
    for (std::size_t q = 0; q < w; ++q) {
      double sum = 0.0;
      for (std::size_t r = 0; r < folds; ++r) sum += toy.beta[r] * maps[(l + r * s) * w + q];
      for (std::size_t k = 0; k < folds; ++k) c[(l + k * s) * w + q] = sum;
    }
  }
  return c;
}

Tensor toy_logits(const ToyModel& toy) {
  const Tensor c = toy_fc_input(toy);
  const std::size_t features = c.numel(), classes = toy.classes();
  Tensor y({1, classes}, toy.bias);
  for (std::size_t i = 0; i < features; ++i)
    for (std::size_t o = 0; o < classes; ++o) y[o] += c[i] * toy.weights.at(i, o);
  return y;
}

double toy_loss(const ToyModel& toy) {
  return cross_entropy(softmax(toy_logits(toy)), toy.label);
}

Tensor weight_slice_grad(const Tensor& fc_input, const Tensor& logits, std::size_t label,
                       std::size_t slice, std::size_t slice_width) {
  if (slice_width == 0 || (slice + 1) * slice_width > fc_input.numel()) {
    throw DimensionError("slice " + std::to_string(slice) + " of width " +
                         std::to_string(slice_width) + " exceeds an input of " +
                         std::to_string(fc_input.numel()) + " features");
  }
  const Tensor probs = softmax(logits);
  const std::size_t classes = probs.dim(1);
  if (label >= classes) throw DimensionError("label out of range");
  Tensor grad({slice_width, classes});
  for (std::size_t q = 0; q < slice_width; ++q) {
    const double c = fc_input[slice * slice_width + q];
    for (std::size_t o = 0; o < classes; ++o) {
      grad.at(q, o) = o == label ? -c + probs[o] * c : probs[o] * c;
    }
  }
  return grad;
}

Tensor kernel_grad_closed_form(const ToyModel& toy, std::size_t kernel_index) {
  return kernel_grad(toy, kernel_index, true);
}

Tensor kernel_grad_unscaled(const ToyModel& toy, std::size_t kernel_index) {
  return kernel_grad(toy, kernel_index, false);
}

}  // namespace nsfold
