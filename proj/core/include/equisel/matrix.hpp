#pragma once

#include <cstdint>
#include <vector>

#include "equisel/errors.hpp"

namespace equisel {

enum class Dtype : std::uint8_t { F64 = 0x01, I64 = 0x02 };

// Dense row-major 2-D array. Exactly one of the payload vectors is
// populated, selected by dtype.
class Matrix {
 public:
  Matrix() = default;

  static Matrix zeros(std::size_t rows, std::size_t cols) {
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.dtype_ = Dtype::F64;
    m.f64_.assign(rows * cols, 0.0);
    return m;
  }

  static Matrix from_f64(std::size_t rows, std::size_t cols,
                         std::vector<double> data) {
    if (data.size() != rows * cols)
      throw ValidationError("matrix payload length != rows*cols");
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.dtype_ = Dtype::F64;
    m.f64_ = std::move(data);
    return m;
  }

  static Matrix from_i64(std::size_t rows, std::size_t cols,
                         std::vector<std::int64_t> data) {
    if (data.size() != rows * cols)
      throw ValidationError("matrix payload length != rows*cols");
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.dtype_ = Dtype::I64;
    m.i64_ = std::move(data);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  Dtype dtype() const { return dtype_; }

  double at(std::size_t r, std::size_t c) const { return f64_[r * cols_ + c]; }
  double& at(std::size_t r, std::size_t c) { return f64_[r * cols_ + c]; }
  std::int64_t iat(std::size_t r, std::size_t c) const {
    return i64_[r * cols_ + c];
  }
  std::int64_t& iat(std::size_t r, std::size_t c) { return i64_[r * cols_ + c]; }

  const std::vector<double>& f64() const { return f64_; }
  const std::vector<std::int64_t>& i64() const { return i64_; }

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Dtype dtype_ = Dtype::F64;
  std::vector<double> f64_;
  std::vector<std::int64_t> i64_;
};

}  // namespace equisel
