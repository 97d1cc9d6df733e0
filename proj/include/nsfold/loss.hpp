#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "nsfold/tensor.hpp"

namespace nsfold {

/// Probabilities are clamped to this floor before taking the log.
inline constexpr double kLogFloor = 1e-300;

/// Row-wise softmax with max subtraction; works on 1 x c or B x c.
Tensor softmax(const Tensor& logits);

/// -ln(probs[label]) for a single 1 x c probability row.
double cross_entropy(const Tensor& probs, std::size_t label);

/// d/d logits of cross_entropy(softmax(logits), label) = softmax - onehot.
Tensor softmax_ce_grad(const Tensor& logits, std::size_t label);

/// How many times cross_entropy had to clamp a zero probability (process-wide).
std::size_t log_clamp_count();

struct BatchLoss {
  double loss = 0.0;    // mean over the batch
  Tensor grad;          // d mean loss / d logits, B x c
  std::size_t correct = 0;
};

BatchLoss softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels);

/// Index of the largest logit per row.
std::size_t argmax_row(const Tensor& scores, std::size_t row);

}  // namespace nsfold
