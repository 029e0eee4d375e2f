#pragma once

#include <cstdint>
#include <optional>
#include <tuple>
#include <vector>

#include "h2ulv/matrix.hpp"

namespace h2ulv {

// Forward map of a bijection on [0, size).
struct Permutation {
  std::vector<int64_t> forward;

  int64_t size() const { return static_cast<int64_t>(forward.size()); }
  static Permutation identity(int64_t n);
  bool valid() const;
};

// Rank truncation rule for pivoted QR: smallest k with
// |R_{k+1,k+1}| <= tol * |R_{1,1}|, optionally capped.
struct RankDecision {
  double tol = 1e-8;
  std::optional<int64_t> cap;
};

enum class Side { left, right };
enum class Uplo { lower, upper };

// C = alpha * op(A) * op(B) + beta * C. Reports 2*m*k*n flops.
Matrix gemm(double alpha, const Matrix& A, const Matrix& B, double beta, const Matrix& C,
            bool transA = false, bool transB = false);
// Convenience product without the C term.
Matrix matmul(const Matrix& A, const Matrix& B, bool transA = false, bool transB = false,
              double alpha = 1.0);
// C += alpha * A * B with C updated in place (no transposes).
void gemm_acc(Matrix& C, const Matrix& A, const Matrix& B, double alpha);

struct QrResult {
  Matrix Q;  // rows x rows orthonormal
  Matrix R;  // rows x cols upper-trapezoidal
};
QrResult qr_full(const Matrix& A);

struct PivotedQr {
  Matrix Qs;         // rows x rank, dominant column space
  Matrix Qr;         // rows x (rows - rank), orthogonal complement
  int64_t rank = 0;
  Permutation perm;  // column permutation: processed order -> original index
};
PivotedQr qr_pivoted(const Matrix& A, const RankDecision& decision);

// Pivoted QR over a concatenation of column groups ("members"): the revealed
// rank additionally keeps stepping until every member's leftover mass is
// below member_tol * ||member||_F. Used for the fill-augmented shared bases.
PivotedQr qr_pivoted_members(const Matrix& A, const RankDecision& decision,
                             const std::vector<int64_t>& member_offsets, double member_tol);

// Last (rows - cols(Qs)) columns of a full QR of Qs: the orthogonal
// complement. [Qs | complement] is square orthonormal.
Matrix orth_complement(const Matrix& Qs, int64_t rows);

struct LuResult {
  Matrix L;  // unit lower triangular
  Matrix U;  // upper triangular
  Permutation perm;
};
// Partial pivoting confined to the block. pivot_tol is relative to max|A|.
LuResult lu_partial(const Matrix& A, double pivot_tol = 1e-14);

// Compact LU (factors packed in place) for repeated solves against one block.
struct LuFactors {
  Matrix lu;          // L below diagonal (unit), U on and above
  Permutation perm;   // row permutation applied to the input
  int64_t n() const { return lu.rows; }

  // X <- A^{-1} X (forward + backward substitution, column by column).
  void solve_in_place(Matrix& X) const;
  // X <- X A^{-1} (right solve).
  void solve_right_in_place(Matrix& X) const;
  Matrix solve(const Matrix& B) const;
  Matrix solve_right(const Matrix& B) const;
  // Partial applications: X <- L^{-1} P X, X <- U^{-1} X, X <- X U^{-1}.
  void solve_lower_in_place(Matrix& X) const;
  void solve_upper_in_place(Matrix& X) const;
  void solve_upper_right_in_place(Matrix& X) const;
  // X <- A^{-T} X.
  void solve_transpose_in_place(Matrix& X) const;
  Matrix solve_transpose(const Matrix& B) const;
};
LuFactors lu_factor(const Matrix& A, double pivot_tol = 1e-14, const char* what = "block");

// Solve op(T) X = B (left) or X op(T) = B (right) for triangular T.
Matrix trsm(const Matrix& T, const Matrix& B, Side side, Uplo uplo, bool unit_diag);

double norm_frobenius(const Matrix& A);
double norm_max_abs(const Matrix& A);
// ||x - x_ref||_2 / ||x_ref||_2 over all entries; errors if x_ref is all zero.
double rel_error(const Matrix& x, const Matrix& x_ref);

Matrix apply_permutation_rows(const Permutation& p, const Matrix& A);

void require_finite(const Matrix& A, const char* what);

}  // namespace h2ulv
