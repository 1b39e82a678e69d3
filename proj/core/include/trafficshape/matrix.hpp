#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "trafficshape/errors.hpp"

namespace trafficshape {

// Dense square matrix of doubles, row-major. By convention rows index
// documents and columns index slots.
class Matrix {
 public:
  Matrix() = default;

  explicit Matrix(int m, double fill = 0.0) : m_(m), data_(size_t(m) * m, fill) {
    if (m < 1) throw InvalidInputError("matrix side length must be >= 1");
  }

  // Builds from nested rows; rejects ragged or non-square input.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    const int m = int(rows.size());
    Matrix out(m);
    for (int d = 0; d < m; ++d) {
      if (int(rows[d].size()) != m)
        throw InvalidInputError("matrix is not square: row " + std::to_string(d) +
                                " has " + std::to_string(rows[d].size()) +
                                " entries, expected " + std::to_string(m));
      for (int p = 0; p < m; ++p) out(d, p) = rows[d][p];
    }
    return out;
  }

  static Matrix identity(int m) {
    Matrix out(m);
    for (int d = 0; d < m; ++d) out(d, d) = 1.0;
    return out;
  }

  // outer(u, v)[d][p] = u[d] * v[p]
  static Matrix outer(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw InvalidInputError("outer: length mismatch");
    Matrix out(int(u.size()));
    for (int d = 0; d < out.size(); ++d)
      for (int p = 0; p < out.size(); ++p) out(d, p) = u[d] * v[p];
    return out;
  }

  int size() const { return m_; }

  double& operator()(int d, int p) { return data_[size_t(d) * m_ + p]; }
  double operator()(int d, int p) const { return data_[size_t(d) * m_ + p]; }

  std::span<const double> row(int d) const {
    return {data_.data() + size_t(d) * m_, size_t(m_)};
  }

  std::span<const double> flat() const { return {data_.data(), data_.size()}; }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double min_entry() const {
    double lo = data_[0];
    for (double x : data_) lo = std::min(lo, x);
    return lo;
  }

  double max_abs() const {
    double hi = 0.0;
    for (double x : data_) hi = std::max(hi, std::abs(x));
    return hi;
  }

  // this += coeff * other
  Matrix& add_scaled(const Matrix& other, double coeff) {
    if (other.m_ != m_) throw InvalidInputError("add_scaled: dimension mismatch");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += coeff * other.data_[i];
    return *this;
  }

  bool operator==(const Matrix& other) const = default;

 private:
  int m_ = 0;
  std::vector<double> data_;
};

// Sum of W[d][sigma[d]] over documents, accumulated in document order so the
// result is reproducible bit-for-bit.
inline double permutation_weight(const Matrix& w, std::span<const int> sigma) {
  double total = 0.0;
  for (int d = 0; d < w.size(); ++d) total += w(d, sigma[d]);
  return total;
}

}  // namespace trafficshape
