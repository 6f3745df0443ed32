#pragma once

#include <cstddef>
#include <vector>

#include "lgplug/errors.hpp"

namespace lgplug {

// Row-major dense matrix of doubles. Row pointers are contiguous so the
// kernel layer can run straight over them.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = A(r×k) · B(k×c)
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A(r×k) · Bᵀ where B is (c×k)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// C = Aᵀ(k×r) · B(k×c); A is (k×r)
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Rows scaled to unit L2 norm; all-zero rows stay zero.
Matrix row_l2_normalized(const Matrix& a);

void add_inplace(Matrix& y, const Matrix& x);
void axpy_inplace(Matrix& y, double alpha, const Matrix& x);
void scale_inplace(Matrix& y, double alpha);

// Unweighted symmetric sparse structure in CSR form. Values are fixed at
// construction; the autograd layer treats it as a constant operand.
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> rowptr;  // n+1
  std::vector<std::size_t> colidx;
  std::vector<double> vals;
};

// Y = S · X
Matrix spmm(const SparseMatrix& s, const Matrix& x);
// Y = Sᵀ · X (CSR transpose product; S here is square so shapes match)
Matrix spmm_t(const SparseMatrix& s, const Matrix& x);

}  // namespace lgplug
