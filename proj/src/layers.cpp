#include "nsfold/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "nsfold/error.hpp"

namespace nsfold {

std::uint64_t hash_bytes(const void* bytes, std::size_t size, std::uint64_t seed) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::size_t batch_of(const Tensor& x, const char* who) {
  if (x.rank() < 2) {
    throw DimensionError(std::string(who) + " expects a batch-first tensor, got " +
                         shape_string(x.shape()));
  }
  return x.dim(0);
}

Shape per_sample_shape(const Tensor& x) { return Shape(x.shape().begin() + 1, x.shape().end()); }

Shape with_batch(std::size_t batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

void he_normal(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.normal(0.0, stddev);
}

void require_forward(bool ready, const std::string& kind) {
  if (!ready) throw StateError(kind + ": backward called before forward");
}

void require_upstream(const Tensor& upstream, const Shape& expected, const std::string& kind) {
  if (upstream.shape() != expected) {
    throw DimensionError(kind + ": upstream gradient " + shape_string(upstream.shape()) +
                         " does not match forward output " + shape_string(expected));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// DenseLayer

DenseLayer::DenseLayer(std::size_t inputs, std::size_t outputs)
    : weights_{"W", Tensor({inputs, outputs}), Tensor({inputs, outputs}), true, true},
      bias_{"b", Tensor({outputs}), Tensor({outputs}), true, false} {
  if (inputs == 0 || outputs == 0) throw ConfigError("dense layer needs positive extents");
}

void DenseLayer::initialize(Rng& rng) {
  he_normal(weights_.value, inputs(), rng);
  bias_.value.fill(0.0);
}

Shape DenseLayer::output_shape(const Shape& input) const {
  if (shape_numel(input) != inputs()) {
    throw DimensionError("dense: input " + shape_string(input) + " does not provide " +
                         std::to_string(inputs()) + " features");
  }
  return {outputs()};
}

Tensor DenseLayer::forward(const Tensor& x, Phase) {
  const std::size_t batch = batch_of(x, "dense");
  if (x.rank() != 2 || x.dim(1) != inputs()) {
    throw DimensionError("dense: input " + shape_string(x.shape()) + " vs weights " +
                         shape_string(weights_.value.shape()));
  }
  Tensor out({batch, outputs()});
  for (std::size_t i = 0; i < batch; ++i)
    std::copy_n(bias_.value.data(), outputs(), out.data() + i * outputs());
  gemm(batch, outputs(), inputs(), x.data(), inputs(), weights_.value.data(), outputs(),
       out.data(), outputs());
  input_ = x;
  return out;
}

Tensor DenseLayer::backward(const Tensor& upstream) {
  require_forward(input_.has_value(), kind());
  const Tensor& x = *input_;
  const std::size_t batch = x.dim(0);
  require_upstream(upstream, {batch, outputs()}, kind());

  // dW += x^T dy
  const Tensor xt = transpose(x);
  gemm(inputs(), outputs(), batch, xt.data(), batch, upstream.data(), outputs(),
       weights_.grad.data(), outputs());
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t o = 0; o < outputs(); ++o) bias_.grad[o] += upstream.at(i, o);

  if (!input_grad_) return Tensor({batch, inputs()});
  // dx = dy W^T, formed as (W dy^T)^T so the large operand streams row-major.
  const Tensor upstream_t = transpose(upstream);
  Tensor grad_t({inputs(), batch});
  gemm(inputs(), batch, outputs(), weights_.value.data(), outputs(), upstream_t.data(), batch,
       grad_t.data(), batch);
  return transpose(grad_t);
}

// ---------------------------------------------------------------------------
// Conv2DLayer

Conv2DLayer::Conv2DLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h,
                         std::size_t kernel_w, ConvMode mode, bool with_bias)
    : kernels_{"K",
               Tensor({out_channels, in_channels, kernel_h, kernel_w}),
               Tensor({out_channels, in_channels, kernel_h, kernel_w}),
               true,
               true},
      bias_{"b", Tensor({out_channels}), Tensor({out_channels}), true, false},
      mode_(mode),
      with_bias_(with_bias) {
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0) {
    throw ConfigError("conv2d layer needs positive extents");
  }
}

void Conv2DLayer::initialize(Rng& rng) {
  const Shape& s = kernels_.value.shape();
  he_normal(kernels_.value, s[1] * s[2] * s[3], rng);
  bias_.value.fill(0.0);
}

std::vector<Parameter*> Conv2DLayer::parameters() {
  if (with_bias_) return {&kernels_, &bias_};
  return {&kernels_};
}

Shape Conv2DLayer::output_shape(const Shape& input) const {
  const Shape& k = kernels_.value.shape();
  if (input.size() != 3 || input[0] != k[1]) {
    throw DimensionError("conv2d: input " + shape_string(input) + " does not match kernels " +
                         shape_string(k));
  }
  if (mode_ == ConvMode::Same) return {k[0], input[1], input[2]};
  if (k[2] > input[1] || k[3] > input[2]) {
    throw DimensionError("conv2d: kernel " + shape_string(k) + " larger than input " +
                         shape_string(input));
  }
  return {k[0], input[1] - k[2] + 1, input[2] - k[3] + 1};
}

Tensor Conv2DLayer::forward(const Tensor& x, Phase) {
  const std::size_t batch = batch_of(x, "conv2d");
  const Shape out_sample = output_shape(per_sample_shape(x));
  const Shape& k = kernels_.value.shape();
  const std::size_t t = k[0], c = k[1], m = k[2], n = k[3];
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t pixels = out_sample[1] * out_sample[2];
  const std::size_t depth = c * m * n;
  const Padding pad = mode_padding(mode_, m, n);

  Tensor out(with_batch(batch, out_sample));
  std::vector<double> cols(depth * pixels);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data() + b * c * h * w, c, h, w, m, n, pad, cols.data());
    double* dst = out.data() + b * t * pixels;
    if (with_bias_)
      for (std::size_t l = 0; l < t; ++l) std::fill_n(dst + l * pixels, pixels, bias_.value[l]);
    gemm(t, pixels, depth, kernels_.value.data(), depth, cols.data(), pixels, dst, pixels);
  }
  input_ = x;
  return out;
}

Tensor Conv2DLayer::backward(const Tensor& upstream) {
  require_forward(input_.has_value(), kind());
  const Tensor& x = *input_;
  const std::size_t batch = x.dim(0);
  const Shape out_sample = output_shape(per_sample_shape(x));
  require_upstream(upstream, with_batch(batch, out_sample), kind());

  const Shape& k = kernels_.value.shape();
  const std::size_t t = k[0], c = k[1], m = k[2], n = k[3];
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t pixels = out_sample[1] * out_sample[2];
  const std::size_t depth = c * m * n;
  const Padding pad = mode_padding(mode_, m, n);

  Tensor grad_input(x.shape());
  const Tensor kernels_t =
      input_grad_ ? transpose(kernels_.value.reshaped({t, depth})) : Tensor();
  std::vector<double> cols(depth * pixels);
  std::vector<double> dy_t(t * pixels);
  std::vector<double> grad_kt(depth * t, 0.0);
  std::vector<double> grad_cols(input_grad_ ? depth * pixels : 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* dy = upstream.data() + b * t * pixels;
    im2col(x.data() + b * c * h * w, c, h, w, m, n, pad, cols.data());
    // dK^T += cols dy^T keeps both gemm extents near full register tiles.
    for (std::size_t l = 0; l < t; ++l)
      for (std::size_t p = 0; p < pixels; ++p) dy_t[p * t + l] = dy[l * pixels + p];
    gemm(depth, t, pixels, cols.data(), pixels, dy_t.data(), t, grad_kt.data(), t);
    if (with_bias_) {
      for (std::size_t l = 0; l < t; ++l) {
        double sum = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) sum += dy[l * pixels + p];
        bias_.grad[l] += sum;
      }
    }
    if (input_grad_) {
      std::fill(grad_cols.begin(), grad_cols.end(), 0.0);
      gemm(depth, pixels, t, kernels_t.data(), t, dy, pixels, grad_cols.data(), pixels);
      col2im(grad_cols.data(), c, h, w, m, n, pad, grad_input.data() + b * c * h * w);
    }
  }
  double* gk = kernels_.grad.data();
  for (std::size_t l = 0; l < t; ++l)
    for (std::size_t r = 0; r < depth; ++r) gk[l * depth + r] += grad_kt[r * t + l];
  return grad_input;
}

// ---------------------------------------------------------------------------
// ReLU

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& upstream, const Tensor& x) {
  if (upstream.shape() != x.shape()) {
    throw DimensionError("relu_backward: upstream " + shape_string(upstream.shape()) +
                         " vs input " + shape_string(x.shape()));
  }
  Tensor out = upstream;
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (!(x[i] > 0.0)) out[i] = 0.0;
  return out;
}

Tensor ReluLayer::forward_owned(Tensor x, Phase) {
  shape_ = x.shape();
  active_.resize(x.numel());
  double* __restrict v = x.data();
  unsigned char* __restrict on = active_.data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) {
    on[i] = v[i] > 0.0;
    v[i] = v[i] > 0.0 ? v[i] : 0.0;
  }
  ready_ = true;
  return x;
}

Tensor ReluLayer::backward_owned(Tensor upstream) {
  require_forward(ready_, kind());
  require_upstream(upstream, shape_, kind());
  double* __restrict g = upstream.data();
  const unsigned char* __restrict on = active_.data();
  const std::size_t n = upstream.numel();
  for (std::size_t i = 0; i < n; ++i) g[i] = on[i] ? g[i] : 0.0;
  return upstream;
}

std::uint64_t ReluLayer::kink_signature() const {
  if (!ready_) return 0;
  return hash_bytes(active_.data(), active_.size());
}

// ---------------------------------------------------------------------------
// MaxPool

Shape MaxPoolLayer::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[1] % 2 != 0 || input[2] % 2 != 0) {
    throw DimensionError("max_pool2d needs c x h x w with even h, w; got " + shape_string(input));
  }
  return {input[0], input[1] / 2, input[2] / 2};
}

Tensor MaxPoolLayer::forward(const Tensor& x, Phase) {
  const std::size_t batch = batch_of(x, "max_pool2d");
  const Shape out_sample = output_shape(per_sample_shape(x));
  Tensor out(with_batch(batch, out_sample));
  argmax_.resize(out.numel());
  max_pool2d(x.data(), batch * x.dim(1), x.dim(2), x.dim(3), out.data(), argmax_.data());
  input_shape_ = x.shape();
  ready_ = true;
  return out;
}

Tensor MaxPoolLayer::backward(const Tensor& upstream) {
  require_forward(ready_, kind());
  if (upstream.numel() != argmax_.size()) {
    throw DimensionError("max_pool2d: upstream " + shape_string(upstream.shape()) +
                         " does not match the last forward");
  }
  Tensor grad(input_shape_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) grad[argmax_[o]] += upstream[o];
  return grad;
}

std::uint64_t MaxPoolLayer::kink_signature() const {
  return hash_bytes(argmax_.data(), argmax_.size() * sizeof(std::size_t));
}

// ---------------------------------------------------------------------------
// Flatten / Reshape / ZeroPad

Tensor flatten(const Tensor& x) { return x.reshaped({1, x.numel()}); }

Tensor FlattenLayer::forward_owned(Tensor x, Phase) {
  const std::size_t batch = batch_of(x, "flatten");
  input_shape_ = x.shape();
  const std::size_t features = x.numel() / std::max<std::size_t>(batch, 1);
  return std::move(x).reshaped({batch, features});
}

Tensor FlattenLayer::backward_owned(Tensor upstream) {
  require_forward(!input_shape_.empty(), kind());
  return std::move(upstream).reshaped(input_shape_);
}

Shape ReshapeLayer::output_shape(const Shape& input) const {
  if (shape_numel(input) != shape_numel(sample_shape_)) {
    throw DimensionError("reshape: " + shape_string(input) + " to " + shape_string(sample_shape_));
  }
  return sample_shape_;
}

Tensor ReshapeLayer::forward_owned(Tensor x, Phase) {
  const std::size_t batch = batch_of(x, "reshape");
  output_shape(per_sample_shape(x));
  input_shape_ = x.shape();
  return std::move(x).reshaped(with_batch(batch, sample_shape_));
}

Tensor ReshapeLayer::backward_owned(Tensor upstream) {
  require_forward(!input_shape_.empty(), kind());
  return std::move(upstream).reshaped(input_shape_);
}

Shape ZeroPadLayer::output_shape(const Shape& input) const {
  if (input.size() != 3) throw DimensionError("zeropad expects c x h x w, got " + shape_string(input));
  return {input[0], input[1] + pad_.top + pad_.bottom, input[2] + pad_.left + pad_.right};
}

Tensor ZeroPadLayer::forward(const Tensor& x, Phase) {
  const std::size_t batch = batch_of(x, "zeropad");
  const Shape out_sample = output_shape(per_sample_shape(x));
  input_shape_ = x.shape();
  const Tensor padded = pad2d(x.reshaped({batch * x.dim(1), x.dim(2), x.dim(3)}), pad_);
  return padded.reshaped(with_batch(batch, out_sample));
}

Tensor ZeroPadLayer::backward(const Tensor& upstream) {
  require_forward(!input_shape_.empty(), kind());
  const std::size_t planes = input_shape_[0] * input_shape_[1];
  const std::size_t h = input_shape_[2], w = input_shape_[3];
  const std::size_t ph = h + pad_.top + pad_.bottom, pw = w + pad_.left + pad_.right;
  if (upstream.numel() != planes * ph * pw) {
    throw DimensionError("zeropad: upstream " + shape_string(upstream.shape()) +
                         " does not match the last forward");
  }
  Tensor grad(input_shape_);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(upstream.data() + (p * ph + y + pad_.top) * pw + pad_.left, w,
                  grad.data() + (p * h + y) * w);
  return grad;
}

// ---------------------------------------------------------------------------
// Dropout

DropoutLayer::DropoutLayer(double keep_rate, Rng rng) : keep_rate_(keep_rate), rng_(rng) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0)) {
    throw ConfigError("dropout keep_rate must lie in (0, 1], got " + std::to_string(keep_rate));
  }
}

Tensor DropoutLayer::forward(const Tensor& x, Phase phase) {
  ready_ = true;
  last_train_ = phase == Phase::Train;
  if (!last_train_) return x;
  if (!(frozen_ && mask_.shape() == x.shape())) {
    mask_ = Tensor(x.shape());
    const double scale = 1.0 / keep_rate_;
    for (double& v : mask_.values()) v = rng_.bernoulli(keep_rate_) ? scale : 0.0;
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask_[i];
  return out;
}

Tensor DropoutLayer::backward(const Tensor& upstream) {
  require_forward(ready_, kind());
  if (!last_train_) return upstream;
  require_upstream(upstream, mask_.shape(), kind());
  Tensor grad = upstream;
  for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] *= mask_[i];
  return grad;
}

// ---------------------------------------------------------------------------
// LRN

namespace {

struct ChannelLayout {
  std::size_t batch, channels, pixels;
};

ChannelLayout channel_layout(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("lrn expects B x c x ..., got " + shape_string(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  return {batch, channels, x.numel() / std::max<std::size_t>(batch * channels, 1)};
}

Tensor lrn_scale(const Tensor& x, const LrnParams& p) {
  const auto [batch, channels, pixels] = channel_layout(x);
  const std::size_t half = p.size / 2;
  Tensor scale(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = x.data() + b * channels * pixels;
    double* dst = scale.data() + b * channels * pixels;
    for (std::size_t i = 0; i < channels; ++i) {
      const std::size_t lo = i >= half ? i - half : 0;
      const std::size_t hi = std::min(channels - 1, i + half);
      for (std::size_t q = 0; q < pixels; ++q) {
        double sum = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) sum += src[j * pixels + q] * src[j * pixels + q];
        dst[i * pixels + q] = p.k + p.alpha * sum;
      }
    }
  }
  return scale;
}

}  // namespace

Tensor lrn_forward(const Tensor& x, const LrnParams& params) {
  if (x.rank() < 1 || x.dim(0) < 1) throw DimensionError("lrn needs at least one channel");
  Shape batched{1};
  batched.insert(batched.end(), x.shape().begin(), x.shape().end());
  LrnLayer layer(params);
  return layer.forward(x.reshaped(batched), Phase::Eval).reshaped(x.shape());
}

Tensor LrnLayer::forward(const Tensor& x, Phase) {
  scale_ = lrn_scale(x, params_);
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= std::pow(scale_[i], -params_.beta);
  input_ = x;
  return out;
}

Tensor LrnLayer::backward(const Tensor& upstream) {
  require_forward(input_.has_value(), kind());
  const Tensor& x = *input_;
  require_upstream(upstream, x.shape(), kind());
  const auto [batch, channels, pixels] = channel_layout(x);
  const std::size_t half = params_.size / 2;
  // coupling[i] = upstream[i] * x[i] * scale[i]^(-beta-1)
  Tensor coupling(x.shape());
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    coupling[i] = upstream[i] * x[i] * std::pow(scale_[i], -params_.beta - 1.0);
    grad[i] = upstream[i] * std::pow(scale_[i], -params_.beta);
  }
  const double factor = 2.0 * params_.alpha * params_.beta;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * channels * pixels;
    for (std::size_t j = 0; j < channels; ++j) {
      const std::size_t lo = j >= half ? j - half : 0;
      const std::size_t hi = std::min(channels - 1, j + half);
      for (std::size_t q = 0; q < pixels; ++q) {
        double sum = 0.0;
        for (std::size_t i = lo; i <= hi; ++i) sum += coupling[base + i * pixels + q];
        grad[base + j * pixels + q] -= factor * x[base + j * pixels + q] * sum;
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// L2

L2Penalty l2_penalty(const std::vector<Parameter*>& params, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("l2 lambda must be nonnegative");
  L2Penalty result;
  for (const Parameter* p : params) {
    if (!p->decays) continue;
    double sum = 0.0;
    for (double w : p->value.values()) sum += w * w;
    result.term += lambda * sum;
    result.grads.push_back((2.0 * lambda) * p->value);
  }
  return result;
}

double apply_l2_penalty(const std::vector<Parameter*>& params, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("l2 lambda must be nonnegative");
  double term = 0.0;
  for (Parameter* p : params) {
    if (!p->decays) continue;
    double sum = 0.0;
    double* g = p->grad.data();
    const double* w = p->value.data();
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      sum += w[i] * w[i];
      g[i] += 2.0 * lambda * w[i];
    }
    term += lambda * sum;
  }
  return term;
}

}  // namespace nsfold
