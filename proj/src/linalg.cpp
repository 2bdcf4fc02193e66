#include "sage/linalg.hpp"

#include <cmath>

#include "sage/error.hpp"

namespace sage {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector add(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "add: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vector subtract(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "subtract: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vector scaled(std::span<const double> a, double s) {
  Vector out(a.begin(), a.end());
  for (double& v : out) v *= s;
  return out;
}

Vector matvec(const Matrix& m, std::span<const double> x) {
  require(m.cols() == x.size(), "matvec: shape mismatch");
  Vector out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * x[c];
    out[r] = s;
  }
  return out;
}

Vector matvec_transposed(const Matrix& m, std::span<const double> x) {
  require(m.rows() == x.size(), "matvec_transposed: shape mismatch");
  Vector out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    const double xr = x[r];
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * xr;
  }
  return out;
}

bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

Vector mean_of(std::span<const Vector> vs) {
  require(!vs.empty(), "mean_of: empty list");
  const Vector& base = vs.front();
  Vector acc(base.size(), 0.0);
  for (const auto& v : vs) {
    require(v.size() == base.size(), "mean_of: dimensions differ");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i] - base[i];
  }
  const double inv = 1.0 / static_cast<double>(vs.size());
  Vector out = base;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += acc[i] * inv;
  return out;
}

}  // namespace sage
