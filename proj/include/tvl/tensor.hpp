#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvl {

using Vector = std::vector<double>;

/// Thrown when operand shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double v);
  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_str(const Matrix& m);

/// result[i] = sum_j W[i,j] x[j], accumulated in ascending j.
Vector matvec(const Matrix& w, std::span<const double> x);

/// result[j] = sum_i W[i,j] y[i], accumulated in ascending i.
Vector matvec_transposed(const Matrix& w, std::span<const double> y);

/// acc[i,j] += scale * y[i] * x[j]
void outer_accumulate(Matrix& acc, std::span<const double> y, std::span<const double> x,
                      double scale = 1.0);

Vector relu(std::span<const double> x);

/// 1 where x > 0, else 0 (subgradient 0 at the kink).
Vector relu_mask(std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);

// Feature-major batch kernels. Columns are samples; every output entry is
// accumulated in the same order as the single-sample kernels above, so a
// batch of one column reproduces matvec/matvec_transposed bit for bit.

/// out = W * in   (W: m x n, in: n x B, out: m x B)
void matmul_into(const Matrix& w, const Matrix& in, Matrix& out);

/// out = W^T * in   (W: m x n, in: m x B, out: n x B)
void matmul_transposed_into(const Matrix& w, const Matrix& in, Matrix& out);

/// acc[i,k] += sum_s y[i,s] * x[k,s], summed over samples in ascending order.
void outer_accumulate_batch(Matrix& acc, const Matrix& y, const Matrix& x);

}  // namespace tvl
