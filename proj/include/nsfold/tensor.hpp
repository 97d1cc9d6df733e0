#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace nsfold {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array of doubles with an explicit shape. Extents are
// positive; the buffer length always equals their product.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// 2-D literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  /// 1 x n row vector.
  static Tensor row(std::initializer_list<double> values);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  [[nodiscard]] std::size_t numel() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  std::span<double> values() { return data_; }
  [[nodiscard]] std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  [[nodiscard]] const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  [[nodiscard]] double at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  [[nodiscard]] double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Same buffer, new shape with equal element count.
  [[nodiscard]] Tensor reshaped(Shape shape) const&;
  [[nodiscard]] Tensor reshaped(Shape shape) &&;

  void fill(double value);

  /// Bitwise equality of shape and contents.
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Elementwise helpers. Shapes must match exactly.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
/// y += alpha * x
void axpy(double alpha, const Tensor& x, Tensor& y);
double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);
bool all_finite(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

// ---------------------------------------------------------------------------
// Numerical kernels

/// C (M x N, leading dim ldc) += A (M x K) * B (K x N), row-major.
/// Every output element accumulates its K products in ascending k order,
/// so results are reproducible run to run and match the naive triple loop.
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc);

Tensor matmul(const Tensor& a, const Tensor& b);

enum class ConvMode { Valid, Same };

struct Padding {
  std::size_t top = 0, bottom = 0, left = 0, right = 0;
};

/// Zero padding that keeps the spatial extent for a kernel of m x n at stride 1;
/// the smaller half leads.
Padding same_padding(std::size_t m, std::size_t n);
Padding mode_padding(ConvMode mode, std::size_t m, std::size_t n);

/// Cross-correlation of an h x w plane with an m x n kernel, stride 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, ConvMode mode);

/// input c x h x w, kernels t x c x m x n -> t x h' x w'.
Tensor conv2d_multi(const Tensor& input, const Tensor& kernels, ConvMode mode);

/// Zero-pad the last two axes of a c x h x w (or h x w) tensor.
Tensor pad2d(const Tensor& input, Padding pad);

/// Unfold a c x h x w stack into a (c*m*n) x (oh*ow) column matrix;
/// row index (ch*m + a)*n + b, column index y*ow + x.
void im2col(const double* input, std::size_t c, std::size_t h, std::size_t w, std::size_t m,
            std::size_t n, Padding pad, double* cols);
/// Adjoint of im2col: scatter-add columns back into a zero-initialized c x h x w stack.
void col2im(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t m,
            std::size_t n, Padding pad, double* output);

struct PoolResult {
  Tensor output;
  /// Flat index into the input of the winning element, one per output cell.
  std::vector<std::size_t> argmax;
};

/// 2x2 window, stride 2, over a c x h x w stack. Ties go to the first element
/// in row-major window order.
PoolResult max_pool2d(const Tensor& input);
/// Raw form over `planes` consecutive h x w planes; argmax indexes `input`.
void max_pool2d(const double* input, std::size_t planes, std::size_t h, std::size_t w, double* output,
                std::size_t* argmax);

}  // namespace nsfold
