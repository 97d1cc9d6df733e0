#include <gtest/gtest.h>

#include <cmath>

#include "nsfold/closed_forms.hpp"
#include "nsfold/error.hpp"
#include "nsfold/gradcheck.hpp"
#include "nsfold/loss.hpp"
#include "nsfold/optim.hpp"

using namespace nsfold;

TEST(Softmax, UniformLogits) {
  const Tensor p = softmax(Tensor({1, 10}, 0.3));
  for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 0.1);
}

TEST(Softmax, TwoClassClosedForm) {
  const Tensor p = softmax(Tensor::row({0.0, std::log(3.0)}));
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  Rng rng(1);
  Tensor z({1, 10});
  // dyadic logits so that z + c is exact
  for (double& v : z.values()) v = std::round(3.0 * rng.normal() * 1024.0) / 1024.0;
  const Tensor p = softmax(z);
  const Tensor q = softmax(z + Tensor({1, 10}, 123.5));
  EXPECT_LT(max_abs_diff(p, q), 1e-15);
  double sum = 0.0;
  for (double v : p.values()) {
    EXPECT_GT(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  // very large logits stay finite
  EXPECT_TRUE(all_finite(softmax(Tensor::row({1000.0, -1000.0, 0.0}))));
}

TEST(CrossEntropy, KnownValues) {
  const Tensor uniform({1, 10}, 0.1);
  for (std::size_t label = 0; label < 10; ++label)
    EXPECT_NEAR(cross_entropy(uniform, label), std::log(10.0), 1e-15);
  EXPECT_NEAR(cross_entropy(uniform, 0), 2.302585093, 1e-9);
  EXPECT_EQ(cross_entropy(Tensor::row({0.0, 1.0}), 1), 0.0);
  EXPECT_NEAR(cross_entropy(Tensor::row({0.75, 0.25}), 1), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, ZeroProbabilityIsClamped) {
  const std::size_t before = log_clamp_count();
  const double l = cross_entropy(Tensor::row({1.0, 0.0}), 1);
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, -std::log(kLogFloor), 1e-9);
  EXPECT_EQ(log_clamp_count(), before + 1);
}

TEST(SoftmaxCeGrad, UniformAndSaturated) {
  const Tensor g = softmax_ce_grad(Tensor({1, 10}), 0);
  EXPECT_NEAR(g[0], -0.9, 1e-15);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_NEAR(g[i], 0.1, 1e-15);
  const Tensor s = softmax_ce_grad(Tensor::row({50.0, 0.0, 0.0}), 0);
  EXPECT_LT(max_abs(s), 1e-20);
}

TEST(SoftmaxCeGrad, FiniteDifference) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor z({1, 10});
    for (double& v : z.values()) v = rng.normal();
    const std::size_t label = rng.index(10);
    const LossFn loss = [&](const std::vector<Tensor>& p) { return cross_entropy(softmax(p[0]), label); };
    const Tensor fd = finite_diff(loss, {z}, 1e-5)[0];
    const Tensor g = softmax_ce_grad(z, label);
    // central differences carry ~1e-11 absolute noise, so tiny entries are
    // compared on the scale of the whole gradient
    EXPECT_LT(scaled_error(g, fd), 1e-8);
  }
}

TEST(BatchLoss, MeanAndScaledGradient) {
  const Tensor logits = Tensor::matrix({{0, 0}, {0, std::log(3.0)}});
  const std::vector<std::uint8_t> labels{0, 1};
  const BatchLoss bl = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(bl.loss, 0.5 * (std::log(2.0) + std::log(4.0 / 3.0)), 1e-15);
  EXPECT_NEAR(bl.grad.at(0, 0), -0.25, 1e-15);
  EXPECT_NEAR(bl.grad.at(1, 1), -0.125, 1e-15);
  EXPECT_EQ(bl.correct, 2u);  // the first row is a tie, argmax picks class 0
}

// ---------------------------------------------------------------------------

TEST(WeightGradClosedForm, UniformLogits) {
  const Tensor c = Tensor::row({1, -2, 3, 4});
  const Tensor g = weight_slice_grad(c, Tensor({1, 10}), 3, 1, 2);
  ASSERT_EQ(g.shape(), (Shape{2, 10}));
  EXPECT_NEAR(g.at(0, 3), -0.9 * 3.0, 1e-15);
  EXPECT_NEAR(g.at(1, 3), -0.9 * 4.0, 1e-15);
  EXPECT_NEAR(g.at(0, 0), 0.1 * 3.0, 1e-15);
  EXPECT_THROW(weight_slice_grad(c, Tensor({1, 10}), 3, 2, 2), DimensionError);
}

TEST(WeightGradClosedForm, ZeroSliceZeroGrad) {
  const Tensor c = Tensor::row({0, 0, 5, 6});
  EXPECT_EQ(max_abs(weight_slice_grad(c, Tensor::row({1, 2, 3}), 0, 0, 2)), 0.0);
}

TEST(WeightGradClosedForm, MatchesBackpropFiftySeeds) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    for (bool ns : {false, true}) {
      ToyModel toy = random_toy(seed, 4, 2);
      if (!ns) toy.beta.clear();
      const ToyGradients bp = toy_backprop(toy);
      const std::size_t w = toy.map_pixels();
      const Tensor fc = toy_fc_input(toy), logits = toy_logits(toy);
      for (std::size_t j = 0; j < 4; ++j) {
        const Tensor g = weight_slice_grad(fc, logits, toy.label, j, w);
        for (std::size_t i = 0; i < g.numel(); ++i)
          ASSERT_NEAR(g[i], bp.weights[j * g.numel() + i], 1e-12) << seed;
      }
    }
  }
}

TEST(KernelGradClosedForm, SingleFoldEqualsPlain) {
  ToyModel toy = random_toy(3, 4, 1);
  toy.beta = {1.0};
  ToyModel plain = toy;
  plain.beta.clear();
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_LT(max_abs_diff(kernel_grad_closed_form(toy, j), kernel_grad_closed_form(plain, j)), 1e-15);
}

TEST(KernelGradClosedForm, ZeroWeightsZeroGrad) {
  ToyModel toy = random_toy(4, 4, 2);
  toy.weights.fill(0.0);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(max_abs(kernel_grad_closed_form(toy, j)), 0.0);
}

TEST(KernelGradClosedForm, MatchesBackpropAndFiniteDifferences) {
  ToyModel toy = random_toy(5, 4, 2);
  const ToyGradients bp = toy_backprop(toy);
  const LossFn loss = [&](const std::vector<Tensor>& p) {
    ToyModel probe = toy;
    probe.kernels = p[0];
    return toy_loss(probe);
  };
  const Tensor fd = finite_diff(loss, {toy.kernels}, 1e-5)[0];
  Tensor closed(toy.kernels.shape());
  for (std::size_t j = 0; j < 4; ++j) {
    const Tensor g = kernel_grad_closed_form(toy, j);
    std::copy(g.values().begin(), g.values().end(), closed.data() + j * 9);
  }
  EXPECT_LT(scaled_error(closed, bp.kernels), 1e-10);
  EXPECT_LT(scaled_error(closed, fd), 1e-6);
}

TEST(KernelGradClosedForm, LiteralFormDiffersByBeta) {
  const ToyModel toy = random_toy(6, 4, 2);
  for (std::size_t j = 0; j < 4; ++j) {
    const double b = toy.beta[j / 2];
    EXPECT_LT(max_abs_diff(b * kernel_grad_unscaled(toy, j), kernel_grad_closed_form(toy, j)), 1e-14);
  }
}

TEST(KernelGradClosedForm, TopologyErrors) {
  ToyModel toy = random_toy(7, 4, 2);
  toy.beta = {1, 1, 1};
  EXPECT_THROW(kernel_grad_closed_form(toy, 0), ConfigError);
  toy = random_toy(7, 4, 2);
  toy.weights = Tensor({3, 10});
  EXPECT_THROW(toy_loss(toy), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(Sgd, HandRecurrence) {
  std::vector<Tensor> p{Tensor({1}, 1.0)};
  const std::vector<Tensor> g{Tensor({1}, 2.0)};
  sgd_step(p, g, {0.1});
  EXPECT_DOUBLE_EQ(p[0][0], 0.8);
  const std::vector<Tensor> zero{Tensor({1}, 0.0)};
  sgd_step(p, zero, {0.1});
  EXPECT_DOUBLE_EQ(p[0][0], 0.8);
  double ref = 0.8;
  for (double gv : {0.5, -1.0, 3.0}) {
    sgd_step(p, std::vector<Tensor>{Tensor({1}, gv)}, {0.05});
    ref -= 0.05 * gv;
  }
  EXPECT_DOUBLE_EQ(p[0][0], ref);
  EXPECT_THROW(sgd_step(p, std::vector<Tensor>{Tensor({2})}, {0.1}), DimensionError);
}

TEST(Adam, ZeroGradientLeavesParams) {
  std::vector<Tensor> p{Tensor({3}, 1.5)};
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(p, std::vector<Tensor>{Tensor({3})}, st);
  EXPECT_EQ(p[0], Tensor({3}, 1.5));
  EXPECT_EQ(st.steps, 3u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Tensor> p{Tensor({2}, {0.0, 0.0})};
  AdamState st;
  adam_step(p, std::vector<Tensor>{Tensor({2}, {4.0, -0.02})}, st);
  EXPECT_NEAR(p[0][0], -1e-3, 1e-9);
  EXPECT_NEAR(p[0][1], 1e-3, 1e-9);
}

TEST(Adam, ThreeStepHandRecurrence) {
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double w = 0.7, m = 0.0, v = 0.0;
  std::vector<Tensor> p{Tensor({1}, w)};
  AdamState st;
  const double grads[] = {0.3, -1.1, 0.05};
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    w -= lr * mh / (std::sqrt(vh) + eps);
    adam_step(p, std::vector<Tensor>{Tensor({1}, g)}, st);
  }
  EXPECT_NEAR(p[0][0], w, 1e-12);
}

TEST(Adam, DeterministicAndShapeChecked) {
  auto run = [] {
    std::vector<Tensor> p{Tensor({4}, {1, 2, 3, 4})};
    AdamState st;
    Rng rng(9);
    for (int i = 0; i < 5; ++i) {
      Tensor g({4});
      for (double& x : g.values()) x = rng.normal();
      adam_step(p, std::vector<Tensor>{g}, st);
    }
    return p[0];
  };
  EXPECT_EQ(run(), run());
  std::vector<Tensor> p{Tensor({2})};
  AdamState st;
  adam_step(p, std::vector<Tensor>{Tensor({2})}, st);
  std::vector<Tensor> q{Tensor({3})};
  EXPECT_THROW(adam_step(q, std::vector<Tensor>{Tensor({3})}, st), DimensionError);
}
