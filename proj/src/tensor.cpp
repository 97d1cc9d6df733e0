#include "nsfold/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "nsfold/error.hpp"

namespace nsfold {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("tensor buffer of " + std::to_string(data_.size()) +
                         " values does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  const double* xs = x.data();
  double* ys = y.data();
  for (std::size_t i = 0; i < y.numel(); ++i) ys[i] += alpha * xs[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double max_abs(const Tensor& a) {
  double worst = 0.0;
  for (double v : a.values()) worst = std::max(worst, std::abs(v));
  return worst;
}

bool all_finite(const Tensor& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("dot: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) sum += a[i] * b[i];
  return sum;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_string(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out({c, r});
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < r; i0 += kTile) {
    for (std::size_t j0 = 0; j0 < c; j0 += kTile) {
      const std::size_t i1 = std::min(r, i0 + kTile), j1 = std::min(c, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) out[j * r + i] = a[i * c + j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// gemm

namespace {

using vec8 = double __attribute__((vector_size(64)));

// Register tile of kRows x kCols; blocks sized for a 48 KiB L1 and 2 MiB L2.
constexpr std::size_t kRows = 6;
constexpr std::size_t kCols = 24;
constexpr std::size_t kDepthBlock = 192;
constexpr std::size_t kRowBlock = 120;
constexpr std::size_t kColBlock = 960;
// Below this many multiply-adds the plain loop wins.
constexpr std::size_t kSmallProduct = 4096;

inline vec8 load8(const double* p) {
  vec8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, vec8 v) { std::memcpy(p, &v, sizeof v); }

// C tile += A panel (depth x 6, k-major) * B panel (depth x 24, k-major).
// Spelled out so the 18 accumulators stay in registers.
void tile_kernel(std::size_t depth, const double* ap, const double* bp, double* c, std::size_t ldc) {
  double* c0 = c;
  double* c1 = c + ldc;
  double* c2 = c + 2 * ldc;
  double* c3 = c + 3 * ldc;
  double* c4 = c + 4 * ldc;
  double* c5 = c + 5 * ldc;
  vec8 a00 = load8(c0), a01 = load8(c0 + 8), a02 = load8(c0 + 16);
  vec8 a10 = load8(c1), a11 = load8(c1 + 8), a12 = load8(c1 + 16);
  vec8 a20 = load8(c2), a21 = load8(c2 + 8), a22 = load8(c2 + 16);
  vec8 a30 = load8(c3), a31 = load8(c3 + 8), a32 = load8(c3 + 16);
  vec8 a40 = load8(c4), a41 = load8(c4 + 8), a42 = load8(c4 + 16);
  vec8 a50 = load8(c5), a51 = load8(c5 + 8), a52 = load8(c5 + 16);
  for (std::size_t k = 0; k < depth; ++k, ap += kRows, bp += kCols) {
    const vec8 b0 = load8(bp), b1 = load8(bp + 8), b2 = load8(bp + 16);
    double s = ap[0];
    a00 += s * b0, a01 += s * b1, a02 += s * b2;
    s = ap[1];
    a10 += s * b0, a11 += s * b1, a12 += s * b2;
    s = ap[2];
    a20 += s * b0, a21 += s * b1, a22 += s * b2;
    s = ap[3];
    a30 += s * b0, a31 += s * b1, a32 += s * b2;
    s = ap[4];
    a40 += s * b0, a41 += s * b1, a42 += s * b2;
    s = ap[5];
    a50 += s * b0, a51 += s * b1, a52 += s * b2;
  }
  store8(c0, a00), store8(c0 + 8, a01), store8(c0 + 16, a02);
  store8(c1, a10), store8(c1 + 8, a11), store8(c1 + 16, a12);
  store8(c2, a20), store8(c2 + 8, a21), store8(c2 + 16, a22);
  store8(c3, a30), store8(c3 + 8, a31), store8(c3 + 16, a32);
  store8(c4, a40), store8(c4 + 8, a41), store8(c4 + 16, a42);
  store8(c5, a50), store8(c5 + 8, a51), store8(c5 + 16, a52);
}

void naive_gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double s = a[i * lda + kk];
      const double* brow = b + kk * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

// Copies B[0:depth, 0:cols] into 24-wide k-major panels, zero-filling the last.
void pack_b(std::size_t depth, std::size_t cols, const double* b, std::size_t ldb, double* out) {
  for (std::size_t j = 0; j < cols; j += kCols, out += depth * kCols) {
    const std::size_t w = std::min(kCols, cols - j);
    for (std::size_t k = 0; k < depth; ++k) {
      double* dst = out + k * kCols;
      std::memcpy(dst, b + k * ldb + j, w * sizeof(double));
      std::fill(dst + w, dst + kCols, 0.0);
    }
  }
}

// Copies A[0:rows, 0:depth] into 6-tall k-major panels, zero-filling the last.
void pack_a(std::size_t rows, std::size_t depth, const double* a, std::size_t lda, double* out) {
  for (std::size_t i = 0; i < rows; i += kRows, out += depth * kRows) {
    const std::size_t h = std::min(kRows, rows - i);
    for (std::size_t k = 0; k < depth; ++k)
      for (std::size_t r = 0; r < kRows; ++r) out[k * kRows + r] = r < h ? a[(i + r) * lda + k] : 0.0;
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  if (m * n * k <= kSmallProduct) {
    naive_gemm(m, n, k, a, lda, b, ldb, c, ldc);
    return;
  }
  thread_local std::vector<double> packed_a, packed_b;
  packed_a.resize(kRowBlock * kDepthBlock);
  packed_b.resize(kColBlock * kDepthBlock);
  double edge[kRows * kCols];
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t nb = std::min(kColBlock, n - j0);
    for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
      const std::size_t kb = std::min(kDepthBlock, k - k0);
      pack_b(kb, nb, b + k0 * ldb + j0, ldb, packed_b.data());
      for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
        const std::size_t mb = std::min(kRowBlock, m - i0);
        pack_a(mb, kb, a + i0 * lda + k0, lda, packed_a.data());
        for (std::size_t jj = 0; jj < nb; jj += kCols) {
          const std::size_t w = std::min(kCols, nb - jj);
          const double* bp = packed_b.data() + jj * kb;
          for (std::size_t ii = 0; ii < mb; ii += kRows) {
            const std::size_t h = std::min(kRows, mb - ii);
            const double* ap = packed_a.data() + ii * kb;
            double* ct = c + (i0 + ii) * ldc + j0 + jj;
            if (h == kRows && w == kCols) {
              tile_kernel(kb, ap, bp, ct, ldc);
              continue;
            }
            for (std::size_t r = 0; r < kRows; ++r)
              for (std::size_t q = 0; q < kCols; ++q) edge[r * kCols + q] = r < h && q < w ? ct[r * ldc + q] : 0.0;
            tile_kernel(kb, ap, bp, edge, kCols);
            for (std::size_t r = 0; r < h; ++r)
              for (std::size_t q = 0; q < w; ++q) ct[r * ldc + q] = edge[r * kCols + q];
          }
        }
      }
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  gemm(a.dim(0), b.dim(1), a.dim(1), a.data(), a.dim(1), b.data(), b.dim(1), out.data(),
       b.dim(1));
  return out;
}

// ---------------------------------------------------------------------------
// convolution

Padding same_padding(std::size_t m, std::size_t n) {
  return Padding{(m - 1) / 2, m / 2, (n - 1) / 2, n / 2};
}

Padding mode_padding(ConvMode mode, std::size_t m, std::size_t n) {
  return mode == ConvMode::Same ? same_padding(m, n) : Padding{};
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, ConvMode mode) {
  if (input.rank() != 2 || kernel.rank() != 2) {
    throw DimensionError("conv2d expects planes, got input " + shape_string(input.shape()) +
                         " and kernel " + shape_string(kernel.shape()));
  }
  const std::size_t m = kernel.dim(0), n = kernel.dim(1);
  if (mode == ConvMode::Valid && (m > input.dim(0) || n > input.dim(1))) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) +
                         " larger than input " + shape_string(input.shape()));
  }
  const Tensor src = mode == ConvMode::Same ? pad2d(input, same_padding(m, n)) : input;
  const std::size_t h = src.dim(0), w = src.dim(1);
  const std::size_t oh = h - m + 1, ow = w - n + 1;
  Tensor out({oh, ow});
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double sum = 0.0;
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < n; ++b) sum += kernel.at(a, b) * src.at(y + a, x + b);
      out.at(y, x) = sum;
    }
  }
  return out;
}

Tensor pad2d(const Tensor& input, Padding pad) {
  if (input.rank() != 2 && input.rank() != 3) {
    throw DimensionError("pad2d expects h x w or c x h x w, got " + shape_string(input.shape()));
  }
  const bool planar = input.rank() == 2;
  const std::size_t c = planar ? 1 : input.dim(0);
  const std::size_t h = input.dim(planar ? 0 : 1), w = input.dim(planar ? 1 : 2);
  const std::size_t ph = h + pad.top + pad.bottom, pw = w + pad.left + pad.right;
  Tensor out(planar ? Shape{ph, pw} : Shape{c, ph, pw});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(input.data() + (ch * h + y) * w, w,
                  out.data() + (ch * ph + y + pad.top) * pw + pad.left);
  return out;
}

void im2col(const double* input, std::size_t c, std::size_t h, std::size_t w, std::size_t m,
            std::size_t n, Padding pad, double* cols) {
  const std::size_t oh = h + pad.top + pad.bottom - m + 1;
  const std::size_t ow = w + pad.left + pad.right - n + 1;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        double* row = cols + ((ch * m + a) * n + b) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y + a) - static_cast<long>(pad.top);
          double* dst = row + y * ow;
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill_n(dst, ow, 0.0);
            continue;
          }
          const double* src = input + (ch * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t x = 0; x < ow; ++x) {
            const long ix = static_cast<long>(x + b) - static_cast<long>(pad.left);
            dst[x] = (ix < 0 || ix >= static_cast<long>(w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t m,
            std::size_t n, Padding pad, double* output) {
  const std::size_t oh = h + pad.top + pad.bottom - m + 1;
  const std::size_t ow = w + pad.left + pad.right - n + 1;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        const double* row = cols + ((ch * m + a) * n + b) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y + a) - static_cast<long>(pad.top);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          double* dst = output + (ch * h + static_cast<std::size_t>(iy)) * w;
          const double* src = row + y * ow;
          for (std::size_t x = 0; x < ow; ++x) {
            const long ix = static_cast<long>(x + b) - static_cast<long>(pad.left);
            if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

Tensor conv2d_multi(const Tensor& input, const Tensor& kernels, ConvMode mode) {
  if (input.rank() != 3 || kernels.rank() != 4) {
    throw DimensionError("conv2d_multi expects c x h x w input and t x c x m x n kernels, got " +
                         shape_string(input.shape()) + " and " + shape_string(kernels.shape()));
  }
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t t = kernels.dim(0), m = kernels.dim(2), n = kernels.dim(3);
  if (kernels.dim(1) != c) {
    throw DimensionError("conv2d_multi: kernels " + shape_string(kernels.shape()) +
                         " do not match input channels of " + shape_string(input.shape()));
  }
  if (mode == ConvMode::Valid && (m > h || n > w)) {
    throw DimensionError("conv2d_multi: kernel " + shape_string(kernels.shape()) +
                         " larger than input " + shape_string(input.shape()));
  }
  const Padding pad = mode_padding(mode, m, n);
  const std::size_t oh = h + pad.top + pad.bottom - m + 1;
  const std::size_t ow = w + pad.left + pad.right - n + 1;
  std::vector<double> cols(c * m * n * oh * ow);
  im2col(input.data(), c, h, w, m, n, pad, cols.data());
  Tensor out({t, oh, ow});
  gemm(t, oh * ow, c * m * n, kernels.data(), c * m * n, cols.data(), oh * ow, out.data(),
       oh * ow);
  return out;
}

// ---------------------------------------------------------------------------
// pooling

PoolResult max_pool2d(const Tensor& input) {
  if (input.rank() != 3) {
    throw DimensionError("max_pool2d expects c x h x w, got " + shape_string(input.shape()));
  }
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("max_pool2d needs even spatial extents, got " +
                         shape_string(input.shape()));
  }
  PoolResult result{Tensor({c, h / 2, w / 2}), std::vector<std::size_t>(c * (h / 2) * (w / 2))};
  max_pool2d(input.data(), c, h, w, result.output.data(), result.argmax.data());
  return result;
}

void max_pool2d(const double* src, std::size_t planes, std::size_t h, std::size_t w, double* output,
                std::size_t* argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t ch = 0; ch < planes; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (ch * h + 2 * y) * w + 2 * x;
        const std::size_t candidates[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t idx : candidates)
          if (src[idx] > src[best]) best = idx;
        const std::size_t o = (ch * oh + y) * ow + x;
        output[o] = src[best];
        argmax[o] = best;
      }
    }
  }
}

}  // namespace nsfold
