#include "tvl/tensor.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace tvl {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError(fmt::format("matrix {}x{} given {} entries", rows_, cols_, data_.size()));
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::string shape_str(const Matrix& m) { return fmt::format("{}x{}", m.rows(), m.cols()); }

Vector matvec(const Matrix& w, std::span<const double> x) {
  if (w.cols() != x.size()) {
    throw ShapeError(fmt::format("matvec: W is {} but x has length {}", shape_str(w), x.size()));
  }
  Vector out(w.rows(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto row = w.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

Vector matvec_transposed(const Matrix& w, std::span<const double> y) {
  if (w.rows() != y.size()) {
    throw ShapeError(
        fmt::format("matvec_transposed: W is {} but y has length {}", shape_str(w), y.size()));
  }
  Vector out(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto row = w.row(i);
    const double yi = y[i];
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j] * yi;
  }
  return out;
}

void outer_accumulate(Matrix& acc, std::span<const double> y, std::span<const double> x,
                      double scale) {
  if (acc.rows() != y.size() || acc.cols() != x.size()) {
    throw ShapeError(fmt::format("outer_accumulate: acc is {} but y, x have lengths {}, {}",
                                 shape_str(acc), y.size(), x.size()));
  }
  for (std::size_t i = 0; i < acc.rows(); ++i) {
    const double yi = scale * y[i];
    auto row = acc.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += yi * x[j];
  }
}

Vector relu(std::span<const double> x) {
  Vector out(x.size());
  // x > 0 ? x : +0.0 also maps -0.0 and NaN-free negatives to +0.0
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
  return out;
}

Vector relu_mask(std::span<const double> x) {
  Vector out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return v > 0.0 ? 1.0 : 0.0; });
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("dot: lengths {} and {}", a.size(), b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void matmul_into(const Matrix& w, const Matrix& in, Matrix& out) {
  if (w.cols() != in.rows()) {
    throw ShapeError(fmt::format("matmul: W is {} but input is {}", shape_str(w), shape_str(in)));
  }
  const std::size_t batch = in.cols();
  if (out.rows() != w.rows() || out.cols() != batch) out = Matrix(w.rows(), batch);
  out.fill(0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double* dst = out.row(i).data();
    const auto wrow = w.row(i);
    for (std::size_t k = 0; k < wrow.size(); ++k) {
      const double wik = wrow[k];
      const double* src = in.row(k).data();
      for (std::size_t s = 0; s < batch; ++s) dst[s] += wik * src[s];
    }
  }
}

void matmul_transposed_into(const Matrix& w, const Matrix& in, Matrix& out) {
  if (w.rows() != in.rows()) {
    throw ShapeError(
        fmt::format("matmul_transposed: W is {} but input is {}", shape_str(w), shape_str(in)));
  }
  const std::size_t batch = in.cols();
  if (out.rows() != w.cols() || out.cols() != batch) out = Matrix(w.cols(), batch);
  out.fill(0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto wrow = w.row(i);
    const double* src = in.row(i).data();
    for (std::size_t j = 0; j < wrow.size(); ++j) {
      const double wij = wrow[j];
      double* dst = out.row(j).data();
      for (std::size_t s = 0; s < batch; ++s) dst[s] += wij * src[s];
    }
  }
}

void outer_accumulate_batch(Matrix& acc, const Matrix& y, const Matrix& x) {
  if (acc.rows() != y.rows() || acc.cols() != x.rows() || y.cols() != x.cols()) {
    throw ShapeError(fmt::format("outer_accumulate_batch: acc {} with y {} and x {}",
                                 shape_str(acc), shape_str(y), shape_str(x)));
  }
  // Sample-major copy of x keeps the innermost loop contiguous.
  const Matrix xt = x.transposed();
  const std::size_t batch = y.cols();
  for (std::size_t i = 0; i < acc.rows(); ++i) {
    double* dst = acc.row(i).data();
    const auto yrow = y.row(i);
    for (std::size_t s = 0; s < batch; ++s) {
      const double yis = yrow[s];
      if (yis == 0.0) continue;
      const double* src = xt.row(s).data();
      for (std::size_t k = 0; k < acc.cols(); ++k) dst[k] += yis * src[k];
    }
  }
}

}  // namespace tvl
