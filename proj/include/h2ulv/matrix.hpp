#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace h2ulv {

// Dense column-major matrix of doubles. The only storage type used by the
// whole library; every block, basis and factor is one of these.
class Matrix {
 public:
  int64_t rows = 0;
  int64_t cols = 0;

  Matrix() = default;
  Matrix(int64_t rows, int64_t cols);

  double& operator()(int64_t i, int64_t j) { return data_[j * rows + i]; }
  const double& operator()(int64_t i, int64_t j) const { return data_[j * rows + i]; }

  double* col(int64_t j) { return data_.data() + j * rows; }
  const double* col(int64_t j) const { return data_.data() + j * rows; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  int64_t size() const { return rows * cols; }
  bool empty() const { return rows == 0 || cols == 0; }

  void zero();
  bool finite() const;

  static Matrix identity(int64_t n);
  static Matrix zeros(int64_t rows, int64_t cols);

  // Sub-block copy [r0, r0+nr) x [c0, c0+nc).
  Matrix block(int64_t r0, int64_t c0, int64_t nr, int64_t nc) const;
  void set_block(int64_t r0, int64_t c0, const Matrix& B);
  void add_block(int64_t r0, int64_t c0, const Matrix& B, double alpha = 1.0);

 private:
  std::vector<double> data_;
};

Matrix transpose(const Matrix& A);
Matrix hconcat(const Matrix& A, const Matrix& B);
Matrix vconcat(const Matrix& A, const Matrix& B);

// Debug dump format: first line "rows cols", then row-major entries with 17
// significant digits, one row per line. Reader/writer round-trip is exact.
void write_matrix(const Matrix& A, const std::string& path);
Matrix read_matrix(const std::string& path);

}  // namespace h2ulv
