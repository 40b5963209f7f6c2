#include "mgvae/tensor.hpp"

#include "mgvae/error.hpp"

#include <algorithm>
#include <cmath>

namespace mgvae {

Tensor::Tensor(std::size_t rows, std::size_t cols, Real fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<Real> values)
    : rows_(rows), cols_(cols), values_(values.begin(), values.end()) {
  if (values_.size() != rows * cols) {
    throw ShapeError("tensor", "value count " + std::to_string(values_.size()) +
                                   " does not match shape " + shape_string(rows, cols));
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<Real> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("tensor", "ragged row list");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(values));
}

Tensor Tensor::row_vector(std::span<const Real> values) {
  return Tensor(1, values.size(), std::vector<Real>(values.begin(), values.end()));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1;
  return t;
}

Tensor Tensor::randn(std::size_t rows, std::size_t cols, Rng& rng, Real stddev) {
  std::normal_distribution<Real> normal(0, stddev);
  Tensor t(rows, cols);
  for (auto& v : t.values_) v = normal(rng);
  return t;
}

Tensor Tensor::uniform(std::size_t rows, std::size_t cols, Rng& rng, Real lo, Real hi) {
  std::uniform_real_distribution<Real> dist(lo, hi);
  Tensor t(rows, cols);
  for (auto& v : t.values_) v = dist(rng);
  return t;
}

void Tensor::fill(Real v) { std::fill(values_.begin(), values_.end(), v); }

Real Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item", "expected 1x1, got " + shape_string(*this));
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](Real v) { return std::isfinite(v); });
}

std::string shape_string(std::size_t rows, std::size_t cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

std::string shape_string(const Tensor& t) { return shape_string(t.rows(), t.cols()); }

Real max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff", shape_string(a) + " vs " + shape_string(b));
  }
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mgvae
