#include <gtest/gtest.h>

#include <cmath>

#include "nsfold/error.hpp"
#include "nsfold/gradcheck.hpp"
#include "nsfold/layers.hpp"

using namespace nsfold;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = scale * rng.normal();
  return t;
}

// Finite-difference check of the scalar loss <layer(x), r> against the
// layer's backward, for the input and for every parameter.
double layer_fd_error(Layer& layer, Tensor x, Rng& rng) {
  const Tensor probe_out = layer.forward(x, Phase::Train);
  const Tensor r = random_tensor(probe_out.shape(), rng);
  for (Parameter* p : layer.parameters()) p->grad.fill(0.0);
  layer.forward(x, Phase::Train);
  const Tensor dx = layer.backward(r);

  double worst = 0.0;
  const double h = 1e-5;
  auto scalar = [&] { return dot(layer.forward(x, Phase::Train), r); };
  auto sweep = [&](Tensor& target, const Tensor& analytic) {
    for (std::size_t i = 0; i < target.numel(); ++i) {
      const double orig = target[i];
      target[i] = orig + h;
      const double plus = scalar();
      target[i] = orig - h;
      const double minus = scalar();
      target[i] = orig;
      worst = std::max(worst, relative_error(analytic[i], (plus - minus) / (2 * h)));
    }
  };
  sweep(x, dx);
  for (Parameter* p : layer.parameters()) {
    const Tensor g = p->grad;
    sweep(p->value, g);
  }
  return worst;
}

}  // namespace

TEST(Dense, IdentityWeights) {
  DenseLayer d(2, 2);
  d.weights().value = Tensor::matrix({{1, 0}, {0, 1}});
  d.bias().value.fill(3.0);
  EXPECT_EQ(d.forward(Tensor::row({1, 2}), Phase::Eval), Tensor::row({4, 5}));
  d.bias().value.fill(0.0);
  EXPECT_EQ(d.forward(Tensor::row({-7, 0.5}), Phase::Eval), Tensor::row({-7, 0.5}));
}

TEST(Dense, MatchesLoopOracle) {
  Rng rng(1);
  DenseLayer d(7, 5);
  d.initialize(rng);
  d.bias().value = random_tensor({5}, rng);
  const Tensor x = random_tensor({3, 7}, rng);
  const Tensor y = d.forward(x, Phase::Eval);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t o = 0; o < 5; ++o) {
      double s = d.bias().value[o];
      for (std::size_t i = 0; i < 7; ++i) s += x.at(b, i) * d.weights().value.at(i, o);
      EXPECT_NEAR(y.at(b, o), s, 1e-13);
    }
}

TEST(Dense, BackwardOneHot) {
  DenseLayer d(2, 1);
  d.forward(Tensor::row({1, 0}), Phase::Train);
  d.backward(Tensor::row({2}));
  EXPECT_EQ(d.weights().grad, Tensor::matrix({{2}, {0}}));
  EXPECT_EQ(d.bias().grad, Tensor({1}, 2.0));
}

TEST(Dense, ZeroUpstreamZeroGrads) {
  Rng rng(2);
  DenseLayer d(4, 3);
  d.initialize(rng);
  d.forward(random_tensor({2, 4}, rng), Phase::Train);
  const Tensor dx = d.backward(Tensor({2, 3}));
  EXPECT_EQ(max_abs(dx), 0.0);
  EXPECT_EQ(max_abs(d.weights().grad), 0.0);
  EXPECT_EQ(max_abs(d.bias().grad), 0.0);
}

TEST(Dense, BackwardBeforeForward) {
  DenseLayer d(2, 2);
  EXPECT_THROW(d.backward(Tensor({1, 2})), StateError);
  EXPECT_THROW(d.forward(Tensor({1, 3}), Phase::Train), DimensionError);
}

TEST(Dense, FiniteDifference) {
  Rng rng(3);
  DenseLayer d(6, 4);
  d.initialize(rng);
  d.bias().value = random_tensor({4}, rng);
  EXPECT_LT(layer_fd_error(d, random_tensor({3, 6}, rng), rng), 1e-6);
}

TEST(Dense, LinearInFlattenedMaps) {
  Rng rng(4);
  DenseLayer d(8, 3);
  d.initialize(rng);
  const Tensor f = random_tensor({1, 2, 2, 2}, rng), g = random_tensor({1, 2, 2, 2}, rng);
  FlattenLayer flat;
  auto apply = [&](const Tensor& x) { return d.forward(flat.forward(x, Phase::Eval), Phase::Eval); };
  const Tensor lhs = apply(2.0 * f + (-0.5) * g);
  const Tensor rhs = 2.0 * apply(f) + (-0.5) * apply(g) + (-0.5) * d.bias().value.reshaped({1, 3});
  // bias is affine: 2b - 0.5b = 1.5b, so add back the missing -0.5b term
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(Conv, FiniteDifferenceBothModes) {
  Rng rng(5);
  for (ConvMode mode : {ConvMode::Valid, ConvMode::Same}) {
    Conv2DLayer c(2, 3, 3, 2, mode);
    c.initialize(rng);
    for (Parameter* p : c.parameters()) p->value = random_tensor(p->value.shape(), rng);
    EXPECT_LT(layer_fd_error(c, random_tensor({2, 2, 5, 4}, rng), rng), 1e-6);
  }
}

TEST(Conv, BatchedMatchesConv2dMulti) {
  Rng rng(6);
  Conv2DLayer c(3, 4, 5, 5, ConvMode::Same, false);
  c.initialize(rng);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const Tensor y = c.forward(x, Phase::Eval);
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor sample({3, 8, 8});
    std::copy(x.data() + b * 192, x.data() + (b + 1) * 192, sample.data());
    const Tensor ref = conv2d_multi(sample, c.kernels().value, ConvMode::Same);
    Tensor got({4, 8, 8});
    std::copy(y.data() + b * 256, y.data() + (b + 1) * 256, got.data());
    EXPECT_LT(max_abs_diff(got, ref), 1e-13);
  }
}

TEST(Relu, Values) {
  EXPECT_EQ(relu(Tensor::row({-1, 0, 2})), Tensor::row({0, 0, 2}));
  const Tensor pos = Tensor::row({0, 1, 5});
  EXPECT_EQ(relu(pos), pos);
  EXPECT_EQ(relu_backward(Tensor::row({1, 1, 1}), Tensor::row({-1, 0, 2})), Tensor::row({0, 0, 1}));
}

TEST(Relu, FiniteDifferenceAwayFromKink) {
  Rng rng(7);
  Tensor x = random_tensor({2, 10}, rng);
  for (double& v : x.values())
    if (std::fabs(v) < 1e-3) v = 0.5;
  ReluLayer r;
  EXPECT_LT(layer_fd_error(r, x, rng), 1e-6);
}

TEST(MaxPoolLayer, FiniteDifference) {
  Rng rng(8);
  MaxPoolLayer p;
  EXPECT_LT(layer_fd_error(p, random_tensor({2, 3, 4, 4}, rng), rng), 1e-6);
}

TEST(Flatten, RowMajorChannelFirst) {
  EXPECT_EQ(flatten(Tensor({1, 2, 2}, {1, 2, 3, 4})), Tensor::row({1, 2, 3, 4}));
  const Tensor flat = Tensor::row({3, 1, 4});
  EXPECT_EQ(flatten(flat), flat);
  Rng rng(9);
  const Tensor x = random_tensor({2, 2, 2}, rng);
  const Tensor f = flatten(x);
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t col = 0; col < 2; ++col) EXPECT_EQ(f[(ch * 2 + r) * 2 + col], x.at(ch, r, col));
}

TEST(Dropout, EvalAndKeepOneAreIdentity) {
  Rng rng(10);
  const Tensor x = random_tensor({4, 50}, rng);
  DropoutLayer half(0.5, Rng(1));
  EXPECT_EQ(half.forward(x, Phase::Eval), x);
  DropoutLayer keep(1.0, Rng(1));
  EXPECT_EQ(keep.forward(x, Phase::Train), x);
}

TEST(Dropout, KeepRateValidated) {
  EXPECT_THROW(DropoutLayer(0.0, Rng(1)), ConfigError);
  EXPECT_THROW(DropoutLayer(1.5, Rng(1)), ConfigError);
}

TEST(Dropout, StatisticsAtHalf) {
  Rng rng(11);
  const Tensor x = random_tensor({1, 100000}, rng);
  DropoutLayer d(0.5, Rng(42));
  const Tensor y = d.forward(x, Phase::Train);
  std::size_t kept = 0;
  double sum_x = 0, sum_y = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (y[i] != 0.0) {
      ++kept;
      EXPECT_EQ(y[i], 2.0 * x[i]);
    }
    sum_x += std::fabs(x[i]);
    sum_y += std::fabs(y[i]);
  }
  const double frac = static_cast<double>(kept) / 100000.0;
  EXPECT_GE(frac, 0.49);
  EXPECT_LE(frac, 0.51);
  // expectation of the output equals the input (on |x| to avoid cancellation)
  EXPECT_NEAR(sum_y / sum_x, 1.0, 0.01);
}

TEST(Dropout, FrozenMaskIsReused) {
  Rng rng(12);
  const Tensor x = random_tensor({2, 30}, rng);
  DropoutLayer d(0.5, Rng(3));
  const Tensor a = d.forward(x, Phase::Train);
  d.freeze_mask(true);
  EXPECT_EQ(d.forward(x, Phase::Train), a);
  d.freeze_mask(false);
  EXPECT_NE(d.forward(x, Phase::Train), a);
}

TEST(Dropout, SeededIsBitIdentical) {
  Rng rng(13);
  const Tensor x = random_tensor({3, 40}, rng);
  DropoutLayer a(0.5, Rng(9)), b(0.5, Rng(9));
  EXPECT_EQ(a.forward(x, Phase::Train), b.forward(x, Phase::Train));
}

TEST(Lrn, AlphaZeroDividesByK) {
  Rng rng(14);
  const Tensor x = random_tensor({3, 2, 2}, rng);
  LrnParams p;
  p.alpha = 0.0;
  const Tensor y = lrn_forward(x, p);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i] / std::pow(2.0, 0.75));
}

TEST(Lrn, SingleChannelScalarFormula) {
  LrnParams p;
  p.alpha = 0.1;
  const Tensor x({1, 1, 3}, {1.0, -2.0, 3.0});
  const Tensor y = lrn_forward(x, p);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_DOUBLE_EQ(y[i], x[i] / std::pow(2.0 + 0.1 * x[i] * x[i], 0.75));
}

TEST(Lrn, WindowClippedAtEdges) {
  LrnParams p;
  p.size = 3;
  p.alpha = 0.5;
  p.k = 1.0;
  p.beta = 1.0;
  const Tensor x({4, 1, 1}, {1, 2, 3, 4});
  const Tensor y = lrn_forward(x, p);
  EXPECT_DOUBLE_EQ(y[0], 1.0 / (1.0 + 0.5 * (1 + 4)));
  EXPECT_DOUBLE_EQ(y[1], 2.0 / (1.0 + 0.5 * (1 + 4 + 9)));
  EXPECT_DOUBLE_EQ(y[3], 4.0 / (1.0 + 0.5 * (9 + 16)));
}

TEST(Lrn, ZeroInAndShrinks) {
  EXPECT_EQ(max_abs(lrn_forward(Tensor({5, 2, 2}), {})), 0.0);
  Rng rng(15);
  const Tensor x = random_tensor({6, 3, 3}, rng, 5.0);
  const Tensor y = lrn_forward(x, {});
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_LE(std::fabs(y[i]), std::fabs(x[i]));
}

TEST(Lrn, FiniteDifference) {
  Rng rng(16);
  LrnParams p;
  p.alpha = 0.05;  // large enough that the cross-channel terms matter
  LrnLayer l(p);
  EXPECT_LT(layer_fd_error(l, random_tensor({2, 7, 2, 3}, rng, 2.0), rng), 1e-6);
}

TEST(L2, ClosedForms) {
  Parameter w{"W", Tensor({1}, 3.0), Tensor({1}), true, true};
  Parameter b{"b", Tensor({1}, 7.0), Tensor({1}), true, false};
  std::vector<Parameter*> ps{&w, &b};
  const L2Penalty zero = l2_penalty(ps, 0.0);
  EXPECT_EQ(zero.term, 0.0);
  EXPECT_EQ(max_abs(zero.grads.at(0)), 0.0);
  const L2Penalty half = l2_penalty(ps, 0.5);
  EXPECT_DOUBLE_EQ(half.term, 4.5);
  ASSERT_EQ(half.grads.size(), 1u);  // bias excluded
  EXPECT_DOUBLE_EQ(half.grads[0][0], 3.0);
  EXPECT_THROW(l2_penalty(ps, -1.0), ConfigError);
  EXPECT_DOUBLE_EQ(apply_l2_penalty(ps, 0.5), 4.5);
  EXPECT_DOUBLE_EQ(w.grad[0], 3.0);
  EXPECT_EQ(b.grad[0], 0.0);
}

TEST(L2, FiniteDifference) {
  Rng rng(17);
  Parameter w{"W", random_tensor({3, 4}, rng), Tensor({3, 4}), true, true};
  const double lambda = 0.3;
  const L2Penalty pen = l2_penalty({&w}, lambda);
  const LossFn loss = [&](const std::vector<Tensor>& p) {
    Parameter tmp{"W", p[0], Tensor({3, 4}), true, true};
    return l2_penalty({&tmp}, lambda).term;
  };
  const Tensor fd = finite_diff(loss, {w.value}, 1e-5)[0];
  for (std::size_t i = 0; i < fd.numel(); ++i) EXPECT_LT(relative_error(pen.grads[0][i], fd[i]), 1e-8);
}

TEST(ZeroPad, ShapesAndAdjoint) {
  Rng rng(18);
  ZeroPadLayer pad({2, 2, 2, 2});
  const Tensor x = random_tensor({2, 1, 28, 28}, rng);
  const Tensor y = pad.forward(x, Phase::Train);
  EXPECT_EQ(y.shape(), (Shape{2, 1, 32, 32}));
  EXPECT_LT(layer_fd_error(pad, random_tensor({1, 2, 3, 3}, rng), rng), 1e-6);
}
