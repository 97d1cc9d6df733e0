#include "nsfold/loss.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "nsfold/error.hpp"

namespace nsfold {

namespace {

std::atomic<std::size_t> g_clamps{0};

void require_rows(const Tensor& t, const char* who) {
  if (t.rank() != 2 || t.dim(1) == 0) {
    throw DimensionError(std::string(who) + " expects rows of class scores, got " +
                         shape_string(t.shape()));
  }
}

void require_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw DimensionError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(classes) + " classes");
  }
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  require_rows(logits, "softmax");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* z = logits.data() + i * classes;
    double* p = out.data() + i * classes;
    const double top = *std::max_element(z, z + classes);
    double total = 0.0;
    for (std::size_t o = 0; o < classes; ++o) {
      p[o] = std::exp(z[o] - top);
      total += p[o];
    }
    for (std::size_t o = 0; o < classes; ++o) p[o] /= total;
  }
  return out;
}

double cross_entropy(const Tensor& probs, std::size_t label) {
  require_rows(probs, "cross_entropy");
  require_label(label, probs.dim(1));
  double p = probs[label];
  if (p < kLogFloor) {
    ++g_clamps;
    p = kLogFloor;
  }
  return -std::log(p);
}

Tensor softmax_ce_grad(const Tensor& logits, std::size_t label) {
  require_rows(logits, "softmax_ce_grad");
  require_label(label, logits.dim(1));
  Tensor grad = softmax(logits);
  grad[label] -= 1.0;
  return grad;
}

std::size_t log_clamp_count() { return g_clamps.load(); }

std::size_t argmax_row(const Tensor& scores, std::size_t row) {
  const std::size_t classes = scores.dim(1);
  const double* z = scores.data() + row * classes;
  return static_cast<std::size_t>(std::max_element(z, z + classes) - z);
}

BatchLoss softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels) {
  require_rows(logits, "softmax_cross_entropy");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  BatchLoss out{0.0, softmax(logits), 0};
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    require_label(labels[i], classes);
    double* g = out.grad.data() + i * classes;
    double p = g[labels[i]];
    if (p < kLogFloor) {
      ++g_clamps;
      p = kLogFloor;
    }
    out.loss -= std::log(p);
    if (argmax_row(logits, i) == labels[i]) ++out.correct;
    g[labels[i]] -= 1.0;
    for (std::size_t o = 0; o < classes; ++o) g[o] *= inv;
  }
  out.loss *= inv;
  return out;
}

}  // namespace nsfold
