#include "lgplug/matrix.hpp"

#include <cmath>

#include "lgplug/kernels.hpp"

namespace lgplug {

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  // Accumulate scaled rows of B into rows of C; keeps the inner loop on
  // contiguous memory for the kernels.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      if (ai[k] != 0.0) kern::axpy(ai[k], b.row(k), ci, b.cols());
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      ci[j] = kern::dot(ai, b.row(j), a.cols());
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      if (ak[i] != 0.0) kern::axpy(ak[i], bk, c.row(i), b.cols());
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix row_l2_normalized(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double nsq = kern::nrm2sqr(out.row(i), out.cols());
    if (nsq > 0.0) kern::scale(1.0 / std::sqrt(nsq), out.row(i), out.cols());
  }
  return out;
}

void add_inplace(Matrix& y, const Matrix& x) {
  if (!y.same_shape(x)) throw ShapeError("add_inplace: shape mismatch");
  kern::add(x.data(), y.data(), y.size());
}

void axpy_inplace(Matrix& y, double alpha, const Matrix& x) {
  if (!y.same_shape(x)) throw ShapeError("axpy_inplace: shape mismatch");
  kern::axpy(alpha, x.data(), y.data(), y.size());
}

void scale_inplace(Matrix& y, double alpha) { kern::scale(alpha, y.data(), y.size()); }

Matrix spmm(const SparseMatrix& s, const Matrix& x) {
  if (s.n != x.rows()) throw ShapeError("spmm: operand row count mismatch");
  Matrix y(s.n, x.cols());
  for (std::size_t i = 0; i < s.n; ++i) {
    double* yi = y.row(i);
    for (std::size_t p = s.rowptr[i]; p < s.rowptr[i + 1]; ++p) {
      kern::axpy(s.vals[p], x.row(s.colidx[p]), yi, x.cols());
    }
  }
  return y;
}

Matrix spmm_t(const SparseMatrix& s, const Matrix& x) {
  if (s.n != x.rows()) throw ShapeError("spmm_t: operand row count mismatch");
  Matrix y(s.n, x.cols());
  for (std::size_t i = 0; i < s.n; ++i) {
    const double* xi = x.row(i);
    for (std::size_t p = s.rowptr[i]; p < s.rowptr[i + 1]; ++p) {
      kern::axpy(s.vals[p], xi, y.row(s.colidx[p]), x.cols());
    }
  }
  return y;
}

}  // namespace lgplug
