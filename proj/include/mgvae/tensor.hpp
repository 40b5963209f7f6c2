#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mgvae {

using Real = double;
using Rng = std::mt19937_64;

using MatrixMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatrixMap =
    Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Dense row-major matrix. Rows are frames (or segments), columns are feature
// channels. A scalar is 1x1 and a vector is 1xN.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Real fill = 0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<Real> values);

  static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor row_vector(std::span<const Real> values);
  static Tensor scalar(Real v) { return Tensor(1, 1, v); }
  static Tensor identity(std::size_t n);
  static Tensor randn(std::size_t rows, std::size_t cols, Rng& rng, Real stddev = 1);
  static Tensor uniform(std::size_t rows, std::size_t cols, Rng& rng, Real lo, Real hi);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
  bool empty() const noexcept { return values_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  Real& operator[](std::size_t i) { return values_[i]; }
  Real operator[](std::size_t i) const { return values_[i]; }

  Real* data() noexcept { return values_.data(); }
  const Real* data() const noexcept { return values_.data(); }
  std::span<Real> values() noexcept { return values_; }
  std::span<const Real> values() const noexcept { return values_; }
  std::span<Real> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  MatrixMap map() { return {values_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)}; }
  ConstMatrixMap map() const {
    return {values_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }

  void fill(Real v);
  Real item() const;  // value of a 1x1 tensor
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  // Aligned so vectorized reductions split the same way wherever the
  // buffer lands; otherwise results differ in the last bits run to run.
  std::vector<Real, Eigen::aligned_allocator<Real>> values_;
};

std::string shape_string(const Tensor& t);
std::string shape_string(std::size_t rows, std::size_t cols);

Real max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mgvae
