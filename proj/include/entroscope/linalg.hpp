#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace entroscope {

// Small dense matrices only (Grams, shapes, Jacobians). Row-major.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * static_cast<size_t>(cols), fill) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix diag(const std::vector<double>& d) {
    Matrix m(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (size_t i = 0; i < d.size(); ++i) m(static_cast<int>(i), static_cast<int>(i)) = d[i];
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return a_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * cols_ + j]; }

  Matrix transpose() const;
  Matrix operator*(const Matrix& o) const;
  Matrix operator-(const Matrix& o) const;
  Matrix operator+(const Matrix& o) const;
  Matrix scaled(double s) const;
  std::vector<double> apply(const std::vector<double>& v) const;
  double trace() const;
  double max_abs() const;
  bool is_symmetric(double tol) const;

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

// Cholesky of an SPD matrix; returns false when the matrix is not PD
// (used to reject bad shape matrices at probe construction).
bool cholesky(const Matrix& m, Matrix& lower);

// Solve (L L^T) x = b given the Cholesky factor.
std::vector<double> cholesky_solve(const Matrix& lower, const std::vector<double>& b);

double determinant_from_cholesky(const Matrix& lower);

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations; input is
// symmetrized first. Ascending order.
std::vector<double> symmetric_eigenvalues(const Matrix& m);

double min_eigenvalue(const Matrix& m);

// Singular values (descending) via the symmetric eigenproblem of M^T M.
std::vector<double> singular_values(const Matrix& m);

// Count of singular values above tol * sigma_max (zero matrix has rank 0).
// Singular values come from eigenvalues of M^T M, which resolves ratios only
// down to ~sqrt(machine eps); the default tolerance sits above that floor.
int numerical_rank(const Matrix& m, double tol = 1e-7);

}  // namespace entroscope
