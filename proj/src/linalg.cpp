#include "entroscope/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace entroscope {

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::operator*(const Matrix& o) const {
  if (cols_ != o.rows_) throw std::invalid_argument("matrix product: inner dimensions differ");
  Matrix r(rows_, o.cols_);
  for (int i = 0; i < rows_; ++i)
    for (int k = 0; k < cols_; ++k) {
      double v = (*this)(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < o.cols_; ++j) r(i, j) += v * o(k, j);
    }
  return r;
}

Matrix Matrix::operator-(const Matrix& o) const {
  Matrix r(rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) r(i, j) = (*this)(i, j) - o(i, j);
  return r;
}

Matrix Matrix::operator+(const Matrix& o) const {
  Matrix r(rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) r(i, j) = (*this)(i, j) + o(i, j);
  return r;
}

Matrix Matrix::scaled(double s) const {
  Matrix r(rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) r(i, j) = (*this)(i, j) * s;
  return r;
}

std::vector<double> Matrix::apply(const std::vector<double>& v) const {
  std::vector<double> r(static_cast<size_t>(rows_), 0.0);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) r[static_cast<size_t>(i)] += (*this)(i, j) * v[static_cast<size_t>(j)];
  return r;
}

double Matrix::trace() const {
  double t = 0.0;
  for (int i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
  return t;
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) m = std::max(m, std::fabs((*this)(i, j)));
  return m;
}

bool Matrix::is_symmetric(double tol) const {
  if (rows_ != cols_) return false;
  for (int i = 0; i < rows_; ++i)
    for (int j = i + 1; j < cols_; ++j)
      if (std::fabs((*this)(i, j) - (*this)(j, i)) > tol) return false;
  return true;
}

bool cholesky(const Matrix& m, Matrix& lower) {
  int n = m.rows();
  if (n != m.cols()) return false;
  lower = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = m(i, j);
      for (int k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      if (i == j) {
        if (s <= 0.0 || !std::isfinite(s)) return false;
        lower(i, i) = std::sqrt(s);
      } else {
        lower(i, j) = s / lower(j, j);
      }
    }
  }
  return true;
}

std::vector<double> cholesky_solve(const Matrix& lower, const std::vector<double>& b) {
  int n = lower.rows();
  std::vector<double> y(static_cast<size_t>(n)), x(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = b[static_cast<size_t>(i)];
    for (int k = 0; k < i; ++k) s -= lower(i, k) * y[static_cast<size_t>(k)];
    y[static_cast<size_t>(i)] = s / lower(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = y[static_cast<size_t>(i)];
    for (int k = i + 1; k < n; ++k) s -= lower(k, i) * x[static_cast<size_t>(k)];
    x[static_cast<size_t>(i)] = s / lower(i, i);
  }
  return x;
}

double determinant_from_cholesky(const Matrix& lower) {
  double d = 1.0;
  for (int i = 0; i < lower.rows(); ++i) d *= lower(i, i);
  return d * d;
}

std::vector<double> symmetric_eigenvalues(const Matrix& m) {
  int n = m.rows();
  if (n != m.cols()) throw std::invalid_argument("symmetric_eigenvalues: matrix not square");
  // symmetrize first; callers are allowed to pass values with ~1e-12 asymmetry
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));

  double scale = a.max_abs();
  if (scale == 0.0) return std::vector<double>(static_cast<size_t>(n), 0.0);

  // cyclic Jacobi sweeps
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-15 * scale * n) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ev[static_cast<size_t>(i)] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

double min_eigenvalue(const Matrix& m) { return symmetric_eigenvalues(m).front(); }

std::vector<double> singular_values(const Matrix& m) {
  Matrix mtm = m.transpose() * m;
  std::vector<double> ev = symmetric_eigenvalues(mtm);
  std::vector<double> sv;
  sv.reserve(ev.size());
  for (auto it = ev.rbegin(); it != ev.rend(); ++it) sv.push_back(std::sqrt(std::max(0.0, *it)));
  return sv;
}

int numerical_rank(const Matrix& m, double tol) {
  std::vector<double> sv = singular_values(m);
  if (sv.empty()) return 0;
  double smax = sv.front();
  if (smax == 0.0) return 0;
  int r = 0;
  for (double s : sv)
    if (s > tol * smax) ++r;
  return r;
}

}  // namespace entroscope
