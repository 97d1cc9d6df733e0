#include "nsfold/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "nsfold/loss.hpp"
#include "nsfold/ns_layer.hpp"
#include "nsfold/rng.hpp"

namespace nsfold {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}

double scaled_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("scaled_error: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const double denom = std::max({max_abs(a), max_abs(b), 1e-8});
  return max_abs_diff(a, b) / denom;
}

std::vector<Tensor> finite_diff(const LossFn& loss, std::vector<Tensor> params, double step) {
  if (!(step > 0.0)) throw ConfigError("finite_diff: step must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) grads.emplace_back(p.shape());
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].numel(); ++i) {
      const double orig = params[t][i];
      params[t][i] = orig + step;
      const double plus = loss(params);
      params[t][i] = orig - step;
      const double minus = loss(params);
      params[t][i] = orig;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("finite_diff: non-finite loss at tensor " + std::to_string(t) +
                           " index " + std::to_string(i));
      }
      grads[t][i] = (plus - minus) / (2.0 * step);
    }
  }
  return grads;
}

std::size_t GradReport::excluded() const {
  std::size_t n = 0;
  for (const TensorCheck& t : tensors) n += t.excluded;
  return n;
}

const TensorCheck* GradReport::worst() const {
  const TensorCheck* w = nullptr;
  for (const TensorCheck& t : tensors)
    if (w == nullptr || t.max_rel_error > w->max_rel_error) w = &t;
  return w;
}

double resolution_limit(double loss_plus, double loss_minus, double step) {
  const double scale = std::max({1.0, std::abs(loss_plus), std::abs(loss_minus)});
  return 4.0 * std::numeric_limits<double>::epsilon() * scale / (2.0 * step);
}

namespace {

const std::set<std::string>& audited_kinds() {
  static const std::set<std::string> kinds = {"dense",   "conv2d",  "relu", "maxpool2d",
                                              "flatten", "reshape", "zeropad", "dropout",
                                              "lrn",     "ns"};
  return kinds;
}

std::vector<std::size_t> pick_coordinates(std::size_t numel, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(numel);
  for (std::size_t i = 0; i < numel; ++i) idx[i] = i;
  if (limit == 0 || numel <= limit) return idx;
  // partial Fisher-Yates
  for (std::size_t i = 0; i < limit; ++i) std::swap(idx[i], idx[i + rng.index(numel - i)]);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct Probe {
  double loss;
  std::uint64_t signature;
};

Probe probe(Model& model, const Tensor& inputs, std::span<const std::uint8_t> labels) {
  const Tensor logits = model.forward(inputs, Phase::Train);
  const double loss = softmax_cross_entropy(logits, labels).loss;
  if (!std::isfinite(loss)) throw NumericError("gradient audit: non-finite loss");
  return {loss, model.kink_signature()};
}

}  // namespace

GradReport check_model(const Model& model, const Tensor& inputs,
                       std::span<const std::uint8_t> labels, double tolerance,
                       const CheckOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("gradient audit: step must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("gradient audit: tolerance must be positive");
  Model m = model;
  std::vector<DropoutLayer*> dropouts;
  for (std::size_t i = 0; i < m.size(); ++i) {
    Layer& layer = m.layer(i);
    if (audited_kinds().count(layer.kind()) == 0) {
      throw AuditError("gradient audit: layer " + std::to_string(i) + " of kind '" +
                       layer.kind() + "' is not supported");
    }
    if (auto* d = dynamic_cast<DropoutLayer*>(&layer)) {
      d->freeze_mask(false);
      dropouts.push_back(d);
    }
  }

  m.zero_grad();
  const Tensor logits = m.forward(inputs, Phase::Train);
  for (DropoutLayer* d : dropouts) d->freeze_mask(true);
  const BatchLoss base = softmax_cross_entropy(logits, labels);
  if (!std::isfinite(base.loss)) throw NumericError("gradient audit: non-finite loss");
  m.backward(base.grad);
  const std::uint64_t base_signature = m.kink_signature();

  std::vector<std::string> names;
  std::vector<Parameter*> params;
  std::vector<Tensor> analytic;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (Parameter* p : m.layer(i).parameters()) {
      if (!p->trainable) continue;
      names.push_back(std::to_string(i) + ":" + m.layer(i).kind() + "." + p->name);
      params.push_back(p);
      analytic.push_back(p->grad);
    }
  }
  if (options.tamper) options.tamper(analytic, names);

  GradReport report;
  report.tolerance = tolerance;
  report.step = options.step;
  Rng rng = Rng(options.seed).split(streams::kGradcheck);
  const double h = options.step;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& value = params[t]->value;
    TensorCheck check;
    check.name = names[t];
    double total = 0.0;
    for (std::size_t idx : pick_coordinates(value.numel(), options.max_coords_per_tensor, rng)) {
      const double orig = value[idx];
      value[idx] = orig + h;
      const Probe plus = probe(m, inputs, labels);
      value[idx] = orig - h;
      const Probe minus = probe(m, inputs, labels);
      value[idx] = orig;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++check.excluded;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * h);
      const double a = analytic[t][idx];
      const double noise = resolution_limit(plus.loss, minus.loss, h);
      if (std::max(std::abs(a), std::abs(numeric)) * tolerance < noise) {
        ++check.below_resolution;
        check.max_abs_error_below_resolution = std::max(check.max_abs_error_below_resolution, std::abs(a - numeric));
        if (std::abs(a - numeric) > noise) check.resolution_failed = true;
        continue;
      }
      const double err = relative_error(a, numeric);
      ++check.checked;
      total += err;
      if (check.checked == 1 || err > check.max_rel_error) {
        check.max_rel_error = err;
        check.worst_index = idx;
      }
    }
    check.mean_rel_error = check.checked > 0 ? total / static_cast<double>(check.checked) : 0.0;
    check.passed = check.max_rel_error < tolerance && !check.resolution_failed;
    report.passed = report.passed && check.passed;
    report.tensors.push_back(std::move(check));
  }
  return report;
}

std::string format_report(const GradReport& report) {
  std::size_t width = 6;
  for (const TensorCheck& t : report.tensors) width = std::max(width, t.name.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %8s %8s %8s %12s %12s %8s  %s\n", static_cast<int>(width),
                "tensor", "checked", "excluded", "tiny", "max_rel", "mean_rel", "worst", "status");
  out << line;
  for (const TensorCheck& t : report.tensors) {
    std::snprintf(line, sizeof line, "%-*s %8zu %8zu %8zu %12.3e %12.3e %8zu  %s\n",
                  static_cast<int>(width), t.name.c_str(), t.checked, t.excluded, t.below_resolution,
                  t.max_rel_error, t.mean_rel_error, t.worst_index, t.passed ? "ok" : "FAIL");
    out << line;
  }
  const TensorCheck* worst = report.worst();
  std::snprintf(line, sizeof line, "tolerance %.1e  step %.1e  excluded %zu  worst %s (%.3e)  %s\n",
                report.tolerance, report.step, report.excluded(),
                worst ? worst->name.c_str() : "-", worst ? worst->max_rel_error : 0.0,
                report.passed ? "PASS" : "FAIL");
  out << line;
  return out.str();
}

// ---------------------------------------------------------------------------

ToyGradients toy_backprop(const ToyModel& toy) {
  validate_toy(toy);
  const std::size_t v = toy.input.dim(0), u = toy.input.dim(1);
  const std::size_t t = toy.maps(), m = toy.kernels.dim(1), n = toy.kernels.dim(2);
  Model model({1, v, u});
  auto& conv = model.emplace<Conv2DLayer>(1, t, m, n, ConvMode::Valid, false);
  conv.kernels().value = toy.kernels.reshaped({t, 1, m, n});
  if (toy.superposed()) {
    auto& ns = model.emplace<NsLayer>(t, toy.beta.size(), 1.0, NsMode::Fixed);
    std::copy(toy.beta.begin(), toy.beta.end(), ns.beta_parameter().value.data());
  } else {
    model.emplace<FlattenLayer>();
  }
  auto& dense = model.emplace<DenseLayer>(toy.weights.dim(0), toy.classes());
  dense.weights().value = toy.weights;
  dense.bias().value.fill(toy.bias);

  model.zero_grad();
  const Tensor logits = model.forward(toy.input.reshaped({1, 1, v, u}), Phase::Train);
  const std::uint8_t label = static_cast<std::uint8_t>(toy.label);
  const BatchLoss loss = softmax_cross_entropy(logits, std::span<const std::uint8_t>(&label, 1));
  model.backward(loss.grad);
  return {dense.weights().grad, conv.kernels().grad.reshaped({t, m, n})};
}

ToyModel random_toy(std::uint64_t seed, std::size_t maps, std::size_t folds) {
  constexpr std::size_t side = 4, k = 3, classes = 10;
  Rng rng(seed);
  ToyModel toy;
  const std::size_t w = (side - k + 1) * (side - k + 1);
  toy.input = Tensor({side, side});
  for (double& x : toy.input.values()) x = rng.normal();
  toy.kernels = Tensor({maps, k, k});
  for (double& x : toy.kernels.values()) x = 0.5 * rng.normal();
  toy.weights = Tensor({maps * w, classes});
  for (double& x : toy.weights.values()) x = 0.3 * rng.normal();
  toy.bias = rng.normal();
  toy.label = rng.index(classes);
  if (folds > 0) {
    toy.beta.resize(folds);
    for (double& b : toy.beta) b = 0.2 + rng.uniform();
  }
  validate_toy(toy);
  return toy;
}

namespace {

Tensor all_kernel_grads(const ToyModel& toy, bool literal) {
  const std::size_t t = toy.maps(), mn = toy.kernels.dim(1) * toy.kernels.dim(2);
  Tensor out(toy.kernels.shape());
  for (std::size_t j = 0; j < t; ++j) {
    const Tensor g = literal ? kernel_grad_unscaled(toy, j) : kernel_grad_closed_form(toy, j);
    std::copy(g.values().begin(), g.values().end(), out.data() + j * mn);
  }
  return out;
}

// Kernels whose gradient moves when weight slice j is perturbed orthogonally
// to that slice's dense input (so the scores stay put).
std::size_t affected_kernels(const ToyModel& toy, std::size_t j, Rng& rng) {
  const std::size_t w = toy.map_pixels(), classes = toy.classes();
  const Tensor c = toy_fc_input(toy);
  const double* cj = c.data() + j * w;
  double cc = 0.0;
  for (std::size_t q = 0; q < w; ++q) cc += cj[q] * cj[q];

  ToyModel moved = toy;
  for (std::size_t o = 0; o < classes; ++o) {
    std::vector<double> d(w);
    for (double& x : d) x = rng.normal();
    if (cc > 0.0) {
      double dc = 0.0;
      for (std::size_t q = 0; q < w; ++q) dc += d[q] * cj[q];
      for (std::size_t q = 0; q < w; ++q) d[q] -= dc / cc * cj[q];
    }
    for (std::size_t q = 0; q < w; ++q) moved.weights.at(j * w + q, o) += d[q];
  }

  const Tensor before = toy_backprop(toy).kernels;
  const Tensor after = toy_backprop(moved).kernels;
  const double scale = std::max({max_abs(before), max_abs(after), 1e-300});
  const std::size_t mn = toy.kernels.dim(1) * toy.kernels.dim(2);
  std::size_t count = 0;
  for (std::size_t k = 0; k < toy.maps(); ++k) {
    double diff = 0.0;
    for (std::size_t i = 0; i < mn; ++i)
      diff = std::max(diff, std::fabs(before[k * mn + i] - after[k * mn + i]));
    if (diff > 1e-8 * scale) ++count;
  }
  return count;
}

ClosedFormCase run_case(const ToyModel& toy, std::uint64_t seed, const ClosedFormTolerances& tol) {
  ClosedFormCase cc;
  cc.seed = seed;
  cc.superposed = toy.superposed();
  const std::size_t t = toy.maps(), w = toy.map_pixels(), classes = toy.classes();
  const ToyGradients bp = toy_backprop(toy);

  const Tensor fc = toy_fc_input(toy);
  const Tensor logits = toy_logits(toy);
  Tensor weight_grad({t * w, classes});
  for (std::size_t j = 0; j < t; ++j) {
    const Tensor g = weight_slice_grad(fc, logits, toy.label, j, w);
    std::copy(g.values().begin(), g.values().end(), weight_grad.data() + j * w * classes);
  }
  cc.weight_error = scaled_error(weight_grad, bp.weights);

  const Tensor kernel = all_kernel_grads(toy, false);
  cc.kernel_error = scaled_error(kernel, bp.kernels);

  ToyModel probe = toy;
  const LossFn loss = [&probe](const std::vector<Tensor>& p) {
    probe.kernels = p[0];
    return toy_loss(probe);
  };
  cc.kernel_fd_error = scaled_error(kernel, finite_diff(loss, {toy.kernels}, tol.fd_step)[0]);

  Tensor literal = all_kernel_grads(toy, true);
  if (toy.superposed()) {
    const std::size_t s = t / toy.beta.size();
    const std::size_t mn = toy.kernels.dim(1) * toy.kernels.dim(2);
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t i = 0; i < mn; ++i) literal[j * mn + i] *= toy.beta[j / s];
  }
  cc.literal_ratio_error = scaled_error(literal, kernel);

  Rng rng = Rng(seed).split(streams::kGradcheck);
  const std::size_t j = rng.index(t);
  cc.affected_kernels = affected_kernels(toy, j, rng);
  cc.expected_affected = toy.superposed() ? toy.beta.size() : 1;

  cc.passed = cc.weight_error <= tol.weight && cc.kernel_error <= tol.kernel &&
              cc.kernel_fd_error <= tol.finite_difference && cc.literal_ratio_error <= tol.kernel &&
              cc.affected_kernels == cc.expected_affected;
  return cc;
}

}  // namespace

ClosedFormReport verify_closed_forms(std::size_t seed_count, std::size_t maps, std::size_t folds,
                                     std::uint64_t base_seed, const ClosedFormTolerances& tol) {
  if (folds == 0 || maps % folds != 0) {
    throw ConfigError("closed-form audit: N = " + std::to_string(folds) +
                      " does not divide t = " + std::to_string(maps));
  }
  ClosedFormReport report;
  report.maps = maps;
  report.folds = folds;
  for (std::uint64_t seed = base_seed; seed < base_seed + seed_count; ++seed) {
    ToyModel toy = random_toy(seed, maps, folds);
    ToyModel plain = toy;
    plain.beta.clear();
    for (const ToyModel* variant : {&plain, &toy}) {
      ClosedFormCase cc = run_case(*variant, seed, tol);
      if (!cc.passed) {
        report.passed = false;
        if (report.failing_seeds.empty() || report.failing_seeds.back() != seed)
          report.failing_seeds.push_back(seed);
      }
      report.cases.push_back(cc);
    }
  }
  return report;
}

std::string format_report(const ClosedFormReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%6s %4s %11s %11s %11s %11s %9s  %s\n", "seed", "ns",
                "weight", "kernel", "kernel_fd", "literal*b", "affected", "status");
  out << line;
  for (const ClosedFormCase& c : report.cases) {
    std::snprintf(line, sizeof line, "%6llu %4s %11.3e %11.3e %11.3e %11.3e %5zu/%-3zu  %s\n",
                  static_cast<unsigned long long>(c.seed), c.superposed ? "yes" : "no",
                  c.weight_error, c.kernel_error, c.kernel_fd_error, c.literal_ratio_error,
                  c.affected_kernels, c.expected_affected, c.passed ? "ok" : "FAIL");
    out << line;
  }
  std::snprintf(line, sizeof line, "t=%zu N=%zu cases=%zu  %s\n", report.maps, report.folds,
                report.cases.size(), report.passed ? "PASS" : "FAIL");
  out << line;
  return out.str();
}

}  // namespace nsfold
