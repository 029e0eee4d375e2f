#include "h2ulv/matrix.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace h2ulv {

Matrix::Matrix(int64_t rows_, int64_t cols_) : rows(rows_), cols(cols_) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
  data_.assign(static_cast<size_t>(rows) * cols, 0.0);
}

void Matrix::zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool Matrix::finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix Matrix::identity(int64_t n) {
  Matrix I(n, n);
  for (int64_t i = 0; i < n; ++i) I(i, i) = 1.0;
  return I;
}

Matrix Matrix::zeros(int64_t rows, int64_t cols) { return Matrix(rows, cols); }

Matrix Matrix::block(int64_t r0, int64_t c0, int64_t nr, int64_t nc) const {
  if (r0 < 0 || c0 < 0 || r0 + nr > rows || c0 + nc > cols)
    throw std::out_of_range("Matrix::block: range out of bounds");
  Matrix B(nr, nc);
  for (int64_t j = 0; j < nc; ++j) {
    const double* src = col(c0 + j) + r0;
    double* dst = B.col(j);
    for (int64_t i = 0; i < nr; ++i) dst[i] = src[i];
  }
  return B;
}

void Matrix::set_block(int64_t r0, int64_t c0, const Matrix& B) {
  if (r0 < 0 || c0 < 0 || r0 + B.rows > rows || c0 + B.cols > cols)
    throw std::out_of_range("Matrix::set_block: range out of bounds");
  for (int64_t j = 0; j < B.cols; ++j) {
    const double* src = B.col(j);
    double* dst = col(c0 + j) + r0;
    for (int64_t i = 0; i < B.rows; ++i) dst[i] = src[i];
  }
}

void Matrix::add_block(int64_t r0, int64_t c0, const Matrix& B, double alpha) {
  if (r0 < 0 || c0 < 0 || r0 + B.rows > rows || c0 + B.cols > cols)
    throw std::out_of_range("Matrix::add_block: range out of bounds");
  for (int64_t j = 0; j < B.cols; ++j) {
    const double* src = B.col(j);
    double* dst = col(c0 + j) + r0;
    for (int64_t i = 0; i < B.rows; ++i) dst[i] += alpha * src[i];
  }
}

Matrix transpose(const Matrix& A) {
  Matrix T(A.cols, A.rows);
  for (int64_t j = 0; j < A.cols; ++j)
    for (int64_t i = 0; i < A.rows; ++i) T(j, i) = A(i, j);
  return T;
}

Matrix hconcat(const Matrix& A, const Matrix& B) {
  if (A.cols == 0) return B;
  if (B.cols == 0) return A;
  if (A.rows != B.rows) throw std::invalid_argument("hconcat: row mismatch");
  Matrix C(A.rows, A.cols + B.cols);
  C.set_block(0, 0, A);
  C.set_block(0, A.cols, B);
  return C;
}

Matrix vconcat(const Matrix& A, const Matrix& B) {
  if (A.rows == 0) return B;
  if (B.rows == 0) return A;
  if (A.cols != B.cols) throw std::invalid_argument("vconcat: col mismatch");
  Matrix C(A.rows + B.rows, A.cols);
  C.set_block(0, 0, A);
  C.set_block(A.rows, 0, B);
  return C;
}

void write_matrix(const Matrix& A, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_matrix: cannot open " + path);
  f << A.rows << " " << A.cols << "\n";
  char buf[64];
  for (int64_t i = 0; i < A.rows; ++i) {
    for (int64_t j = 0; j < A.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", A(i, j));
      f << buf << (j + 1 == A.cols ? "" : " ");
    }
    f << "\n";
  }
}

Matrix read_matrix(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_matrix: cannot open " + path);
  int64_t rows, cols;
  if (!(f >> rows >> cols)) throw std::runtime_error("read_matrix: bad header in " + path);
  Matrix A(rows, cols);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j)
      if (!(f >> A(i, j))) throw std::runtime_error("read_matrix: truncated file " + path);
  return A;
}

}  // namespace h2ulv
