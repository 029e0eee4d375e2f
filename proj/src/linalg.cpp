#include "h2ulv/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "h2ulv/flops.hpp"

namespace h2ulv {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

// C += alpha * A * B, plain column-major kernel, 8 C-columns per sweep of A.
void gemm_core(Matrix& C, const Matrix& A, const Matrix& B, double alpha) {
  const int64_t m = A.rows, k = A.cols, n = B.cols;
  if (m == 0 || n == 0 || k == 0) return;
  int64_t j = 0;
  for (; j + 8 <= n; j += 8) {
    double* c0 = C.col(j);
    double* c1 = C.col(j + 1);
    double* c2 = C.col(j + 2);
    double* c3 = C.col(j + 3);
    double* c4 = C.col(j + 4);
    double* c5 = C.col(j + 5);
    double* c6 = C.col(j + 6);
    double* c7 = C.col(j + 7);
    for (int64_t l = 0; l < k; ++l) {
      const double* a = A.col(l);
      const double b0 = alpha * B(l, j);
      const double b1 = alpha * B(l, j + 1);
      const double b2 = alpha * B(l, j + 2);
      const double b3 = alpha * B(l, j + 3);
      const double b4 = alpha * B(l, j + 4);
      const double b5 = alpha * B(l, j + 5);
      const double b6 = alpha * B(l, j + 6);
      const double b7 = alpha * B(l, j + 7);
      for (int64_t i = 0; i < m; ++i) {
        const double ai = a[i];
        c0[i] += ai * b0;
        c1[i] += ai * b1;
        c2[i] += ai * b2;
        c3[i] += ai * b3;
        c4[i] += ai * b4;
        c5[i] += ai * b5;
        c6[i] += ai * b6;
        c7[i] += ai * b7;
      }
    }
  }
  for (; j < n; ++j) {
    double* c = C.col(j);
    for (int64_t l = 0; l < k; ++l) {
      const double* a = A.col(l);
      const double b = alpha * B(l, j);
      for (int64_t i = 0; i < m; ++i) c[i] += a[i] * b;
    }
  }
}

}  // namespace

Permutation Permutation::identity(int64_t n) {
  Permutation p;
  p.forward.resize(n);
  for (int64_t i = 0; i < n; ++i) p.forward[i] = i;
  return p;
}

bool Permutation::valid() const {
  std::vector<char> seen(forward.size(), 0);
  for (int64_t v : forward) {
    if (v < 0 || v >= size() || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

void require_finite(const Matrix& A, const char* what) {
  if (!A.finite()) fail(std::string("non-finite input to ") + what);
}

Matrix gemm(double alpha, const Matrix& A, const Matrix& B, double beta, const Matrix& C,
            bool transA, bool transB) {
  const Matrix& At = transA ? A : A;
  Matrix Ae, Be;
  const Matrix* Ap = &At;
  if (transA) {
    Ae = transpose(A);
    Ap = &Ae;
  }
  const Matrix* Bp = &B;
  if (transB) {
    Be = transpose(B);
    Bp = &Be;
  }
  const int64_t m = Ap->rows, k = Ap->cols, n = Bp->cols;
  if (Bp->rows != k)
    fail("gemm: shape mismatch (" + std::to_string(m) + "x" + std::to_string(k) + " * " +
         std::to_string(Bp->rows) + "x" + std::to_string(n) + ")");
  Matrix R(m, n);
  if (beta != 0.0) {
    if (C.rows != m || C.cols != n) fail("gemm: C shape mismatch");
    for (int64_t j = 0; j < n; ++j) {
      const double* src = C.col(j);
      double* dst = R.col(j);
      for (int64_t i = 0; i < m; ++i) dst[i] = beta * src[i];
    }
  }
  if (alpha != 0.0) gemm_core(R, *Ap, *Bp, alpha);
  count_flops(2ull * m * k * n);
  return R;
}

Matrix matmul(const Matrix& A, const Matrix& B, bool transA, bool transB, double alpha) {
  return gemm(alpha, A, B, 0.0, Matrix(), transA, transB);
}

void gemm_acc(Matrix& C, const Matrix& A, const Matrix& B, double alpha) {
  if (A.cols != B.rows || C.rows != A.rows || C.cols != B.cols) fail("gemm_acc: shape mismatch");
  gemm_core(C, A, B, alpha);
  count_flops(2ull * A.rows * A.cols * B.cols);
}

namespace {

// Householder reflectors stored as columns of V with scalar taus.
struct Reflectors {
  Matrix V;  // m x nref, reflector k occupies rows k..m-1 of column k
  std::vector<double> tau;
};

// Apply (I - tau v v^T) to columns [c0, n) of A, reflector living in rows k..m.
void apply_reflector(Matrix& A, const Matrix& V, double tau, int64_t k, int64_t c0) {
  if (tau == 0.0) return;
  const int64_t m = A.rows, n = A.cols;
  const double* v = V.col(k);
  for (int64_t j = c0; j < n; ++j) {
    double* a = A.col(j);
    double dot = 0.0;
    for (int64_t i = k; i < m; ++i) dot += v[i] * a[i];
    const double s = tau * dot;
    for (int64_t i = k; i < m; ++i) a[i] -= s * v[i];
  }
  count_flops(4ull * (m - k) * (n > c0 ? n - c0 : 0));
}

// Build reflector for A[k:m, k]; returns the resulting R_kk.
double make_reflector(Matrix& A, Reflectors& refl, int64_t k) {
  const int64_t m = A.rows;
  double normsq = 0.0;
  for (int64_t i = k; i < m; ++i) normsq += A(i, k) * A(i, k);
  const double norm = std::sqrt(normsq);
  double* v = refl.V.col(k);
  for (int64_t i = 0; i < k; ++i) v[i] = 0.0;
  if (norm == 0.0) {
    for (int64_t i = k; i < m; ++i) v[i] = 0.0;
    refl.tau[k] = 0.0;
    return 0.0;
  }
  const double a0 = A(k, k);
  const double alpha = (a0 >= 0.0) ? -norm : norm;
  double vnormsq = 0.0;
  v[k] = a0 - alpha;
  vnormsq += v[k] * v[k];
  for (int64_t i = k + 1; i < m; ++i) {
    v[i] = A(i, k);
    vnormsq += v[i] * v[i];
  }
  refl.tau[k] = (vnormsq == 0.0) ? 0.0 : 2.0 / vnormsq;
  A(k, k) = alpha;
  for (int64_t i = k + 1; i < m; ++i) A(i, k) = 0.0;
  count_flops(4ull * (m - k));
  return alpha;
}

// Accumulate the full m x m Q from reflectors (backward application).
Matrix form_q(const Reflectors& refl, int64_t m, int64_t nref) {
  Matrix Q = Matrix::identity(m);
  for (int64_t k = nref - 1; k >= 0; --k) apply_reflector(Q, refl.V, refl.tau[k], k, 0);
  return Q;
}

}  // namespace

QrResult qr_full(const Matrix& A) {
  if (A.rows < 1) fail("qr_full: empty matrix");
  require_finite(A, "qr_full");
  const int64_t m = A.rows, n = A.cols;
  const int64_t nref = std::min(m, n);
  Matrix R = A;
  Reflectors refl{Matrix(m, nref), std::vector<double>(nref, 0.0)};
  for (int64_t k = 0; k < nref; ++k) {
    make_reflector(R, refl, k);
    apply_reflector(R, refl.V, refl.tau[k], k, k + 1);
  }
  QrResult out;
  out.Q = form_q(refl, m, nref);
  out.R = std::move(R);
  return out;
}

namespace {

struct PivotedQrState {
  Matrix R;
  Reflectors refl;
  std::vector<int64_t> piv;       // position -> original column
  std::vector<double> colnorm2;   // remaining squared norms per position
  std::vector<double> colnorm2_orig;
};

PivotedQr run_pivoted_qr(const Matrix& A, const RankDecision& decision,
                         const std::vector<int64_t>* member_offsets, double member_tol) {
  if (A.rows < 1) fail("qr_pivoted: empty matrix");
  if (decision.tol <= 0.0) fail("qr_pivoted: tol must be positive");
  require_finite(A, "qr_pivoted");
  const int64_t m = A.rows, n = A.cols;
  const int64_t kmax0 = std::min(m, n);
  int64_t kmax = kmax0;
  if (decision.cap && *decision.cap < kmax) kmax = std::max<int64_t>(0, *decision.cap);

  PivotedQrState st;
  st.R = A;
  st.refl.V = Matrix(m, kmax0);
  st.refl.tau.assign(kmax0, 0.0);
  st.piv.resize(n);
  st.colnorm2.assign(n, 0.0);
  for (int64_t j = 0; j < n; ++j) {
    st.piv[j] = j;
    double s = 0.0;
    for (int64_t i = 0; i < m; ++i) s += A(i, j) * A(i, j);
    st.colnorm2[j] = s;
  }
  st.colnorm2_orig = st.colnorm2;

  // Optional member bookkeeping: leftover Frobenius mass per column group.
  std::vector<int64_t> member_of;
  std::vector<double> member_mass, member_target;
  if (member_offsets && member_offsets->size() > 1) {
    member_of.resize(n);
    const auto& off = *member_offsets;
    const int64_t nm = static_cast<int64_t>(off.size()) - 1;
    member_mass.assign(nm, 0.0);
    for (int64_t g = 0; g < nm; ++g)
      for (int64_t j = off[g]; j < off[g + 1]; ++j) {
        member_of[j] = g;
        member_mass[g] += st.colnorm2[j];
      }
    member_target.resize(nm);
    for (int64_t g = 0; g < nm; ++g)
      member_target[g] = member_tol * member_tol * member_mass[g];
  }

  double r11 = -1.0;
  int64_t rank = 0;
  for (int64_t k = 0; k < kmax; ++k) {
    // Pivot: largest remaining norm; ties within 1e-15 relative go to the
    // lowest original column index.
    double best = -1.0;
    for (int64_t j = k; j < n; ++j) best = std::max(best, st.colnorm2[j]);
    if (best <= 0.0) break;
    const double tie = best * (1.0 - 4e-15);
    int64_t sel = -1;
    int64_t sel_orig = -1;
    for (int64_t j = k; j < n; ++j) {
      if (st.colnorm2[j] >= tie && (sel < 0 || st.piv[j] < sel_orig)) {
        sel = j;
        sel_orig = st.piv[j];
      }
    }
    if (sel != k) {
      for (int64_t i = 0; i < m; ++i) std::swap(st.R(i, k), st.R(i, sel));
      std::swap(st.colnorm2[k], st.colnorm2[sel]);
      std::swap(st.colnorm2_orig[k], st.colnorm2_orig[sel]);
      std::swap(st.piv[k], st.piv[sel]);
      if (!member_of.empty()) std::swap(member_of[k], member_of[sel]);
    }

    const double pivot_norm = std::sqrt(std::max(0.0, st.colnorm2[k]));
    if (k == 0) r11 = pivot_norm;
    const bool diag_done = pivot_norm <= decision.tol * r11;
    bool members_done = true;
    if (!member_mass.empty()) {
      for (size_t g = 0; g < member_mass.size(); ++g)
        if (member_mass[g] > member_target[g]) {
          members_done = false;
          break;
        }
    }
    // Floor against stepping on pure roundoff.
    const bool floor_hit = pivot_norm <= 1e-15 * r11;
    if ((diag_done && members_done) || floor_hit) break;

    const double rkk = make_reflector(st.R, st.refl, k);
    apply_reflector(st.R, st.refl.V, st.refl.tau[k], k, k + 1);
    (void)rkk;
    ++rank;

    // Downdate remaining column norms; recompute when cancellation bites.
    for (int64_t j = k + 1; j < n; ++j) {
      const double rkj = st.R(k, j);
      double upd = st.colnorm2[j] - rkj * rkj;
      if (upd < 1e-8 * st.colnorm2_orig[j]) {
        upd = 0.0;
        for (int64_t i = k + 1; i < m; ++i) upd += st.R(i, j) * st.R(i, j);
      }
      st.colnorm2[j] = std::max(0.0, upd);
      if (!member_of.empty()) {
        member_mass[member_of[j]] -= rkj * rkj;
        if (member_mass[member_of[j]] < 0.0) member_mass[member_of[j]] = 0.0;
      }
    }
    if (!member_of.empty()) {
      // The processed column's leftover mass is gone entirely.
      member_mass[member_of[k]] -= st.colnorm2[k];
      if (member_mass[member_of[k]] < 0.0) member_mass[member_of[k]] = 0.0;
      st.colnorm2[k] = 0.0;
    }
  }

  PivotedQr out;
  out.rank = rank;
  Matrix Q = form_q(st.refl, m, rank);
  out.Qs = rank > 0 ? Q.block(0, 0, m, rank) : Matrix(m, 0);
  out.Qr = Q.block(0, rank, m, m - rank);
  out.perm.forward = st.piv;
  return out;
}

}  // namespace

PivotedQr qr_pivoted(const Matrix& A, const RankDecision& decision) {
  return run_pivoted_qr(A, decision, nullptr, 0.0);
}

PivotedQr qr_pivoted_members(const Matrix& A, const RankDecision& decision,
                             const std::vector<int64_t>& member_offsets, double member_tol) {
  return run_pivoted_qr(A, decision, &member_offsets, member_tol);
}

Matrix orth_complement(const Matrix& Qs, int64_t rows) {
  if (Qs.cols == 0) return Matrix::identity(rows);
  if (Qs.rows != rows) fail("orth_complement: row mismatch");
  QrResult qr = qr_full(Qs);
  return qr.Q.block(0, Qs.cols, rows, rows - Qs.cols);
}

LuFactors lu_factor(const Matrix& A, double pivot_tol, const char* what) {
  if (A.rows != A.cols) fail("lu_factor: matrix not square");
  require_finite(A, "lu_factor");
  const int64_t n = A.rows;
  LuFactors f;
  f.lu = A;
  f.perm = Permutation::identity(n);
  const double amax = norm_max_abs(A);
  Matrix& M = f.lu;
  for (int64_t k = 0; k < n; ++k) {
    int64_t p = k;
    double best = std::abs(M(k, k));
    for (int64_t i = k + 1; i < n; ++i) {
      const double v = std::abs(M(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best <= pivot_tol * amax)
      fail(std::string("singular block in LU of ") + what + " at step " + std::to_string(k));
    if (p != k) {
      for (int64_t j = 0; j < n; ++j) std::swap(M(k, j), M(p, j));
      std::swap(f.perm.forward[k], f.perm.forward[p]);
    }
    const double inv = 1.0 / M(k, k);
    double* ck = M.col(k);
    for (int64_t i = k + 1; i < n; ++i) ck[i] *= inv;
    for (int64_t j = k + 1; j < n; ++j) {
      double* cj = M.col(j);
      const double mkj = cj[k];
      for (int64_t i = k + 1; i < n; ++i) cj[i] -= ck[i] * mkj;
    }
    count_flops(static_cast<uint64_t>(n - k - 1) + 2ull * (n - k - 1) * (n - k - 1));
  }
  return f;
}

LuResult lu_partial(const Matrix& A, double pivot_tol) {
  LuFactors f = lu_factor(A, pivot_tol, "block");
  const int64_t n = f.n();
  LuResult out;
  out.L = Matrix::identity(n);
  out.U = Matrix(n, n);
  for (int64_t j = 0; j < n; ++j) {
    for (int64_t i = j + 1; i < n; ++i) out.L(i, j) = f.lu(i, j);
    for (int64_t i = 0; i <= j; ++i) out.U(i, j) = f.lu(i, j);
  }
  out.perm = f.perm;
  return out;
}

void LuFactors::solve_in_place(Matrix& X) const {
  const int64_t m = n();
  if (X.rows != m) fail("LuFactors::solve: shape mismatch");
  // Apply the row permutation.
  Matrix tmp(m, X.cols);
  for (int64_t j = 0; j < X.cols; ++j)
    for (int64_t i = 0; i < m; ++i) tmp(i, j) = X(perm.forward[i], j);
  // Forward (unit lower) then backward (upper).
  for (int64_t j = 0; j < X.cols; ++j) {
    double* x = tmp.col(j);
    for (int64_t k = 0; k < m; ++k) {
      const double xk = x[k];
      const double* lk = lu.col(k);
      for (int64_t i = k + 1; i < m; ++i) x[i] -= lk[i] * xk;
    }
    for (int64_t k = m - 1; k >= 0; --k) {
      x[k] /= lu(k, k);
      const double xk = x[k];
      const double* uk = lu.col(k);
      for (int64_t i = 0; i < k; ++i) x[i] -= uk[i] * xk;
    }
  }
  count_flops(2ull * m * m * X.cols);
  X = std::move(tmp);
}

Matrix LuFactors::solve(const Matrix& B) const {
  Matrix X = B;
  solve_in_place(X);
  return X;
}

void LuFactors::solve_right_in_place(Matrix& X) const {
  // X A^{-1} = (A^{-T} X^T)^T; done via the transposed system directly.
  const int64_t m = n();
  if (X.cols != m) fail("LuFactors::solve_right: shape mismatch");
  // X <- X U^{-1}: forward sweep over columns.
  for (int64_t k = 0; k < m; ++k) {
    const double inv = 1.0 / lu(k, k);
    double* xk = X.col(k);
    for (int64_t i = 0; i < X.rows; ++i) xk[i] *= inv;
    for (int64_t j = k + 1; j < m; ++j) {
      const double ukj = lu(k, j);
      if (ukj == 0.0) continue;
      double* xj = X.col(j);
      for (int64_t i = 0; i < X.rows; ++i) xj[i] -= ukj * xk[i];
    }
  }
  // X <- X L^{-1}: backward sweep (unit diagonal).
  for (int64_t k = m - 1; k >= 0; --k) {
    double* xk = X.col(k);
    for (int64_t j = 0; j < k; ++j) {
      const double lkj = lu(k, j);
      if (lkj == 0.0) continue;
      double* xj = X.col(j);
      for (int64_t i = 0; i < X.rows; ++i) xj[i] -= lkj * xk[i];
    }
  }
  // Undo the row permutation on the right: columns permute.
  Matrix out(X.rows, m);
  for (int64_t k = 0; k < m; ++k) {
    const double* src = X.col(k);
    double* dst = out.col(perm.forward[k]);
    std::memcpy(dst, src, sizeof(double) * X.rows);
  }
  count_flops(2ull * m * m * X.rows);
  X = std::move(out);
}

Matrix LuFactors::solve_right(const Matrix& B) const {
  Matrix X = B;
  solve_right_in_place(X);
  return X;
}

void LuFactors::solve_transpose_in_place(Matrix& X) const {
  const int64_t m = n();
  if (X.rows != m) fail("LuFactors::solve_transpose: shape mismatch");
  // A = P^T L U, so A^T x = b solves as U^T w = b, L^T v = w, x = P^T v.
  for (int64_t j = 0; j < X.cols; ++j) {
    double* x = X.col(j);
    for (int64_t k = 0; k < m; ++k) {
      const double* uk = lu.col(k);
      double dot = 0.0;
      for (int64_t i = 0; i < k; ++i) dot += uk[i] * x[i];
      x[k] = (x[k] - dot) / uk[k];
    }
    for (int64_t k = m - 1; k >= 0; --k) {
      const double* lk = lu.col(k);
      double dot = 0.0;
      for (int64_t i = k + 1; i < m; ++i) dot += lk[i] * x[i];
      x[k] -= dot;
    }
  }
  Matrix out(m, X.cols);
  for (int64_t j = 0; j < X.cols; ++j)
    for (int64_t i = 0; i < m; ++i) out(perm.forward[i], j) = X(i, j);
  count_flops(2ull * m * m * X.cols);
  X = std::move(out);
}

Matrix LuFactors::solve_transpose(const Matrix& B) const {
  Matrix X = B;
  solve_transpose_in_place(X);
  return X;
}

void LuFactors::solve_lower_in_place(Matrix& X) const {
  const int64_t m = n();
  if (X.rows != m) fail("LuFactors::solve_lower: shape mismatch");
  Matrix tmp(m, X.cols);
  for (int64_t j = 0; j < X.cols; ++j)
    for (int64_t i = 0; i < m; ++i) tmp(i, j) = X(perm.forward[i], j);
  for (int64_t j = 0; j < X.cols; ++j) {
    double* x = tmp.col(j);
    for (int64_t k = 0; k < m; ++k) {
      const double xk = x[k];
      const double* lk = lu.col(k);
      for (int64_t i = k + 1; i < m; ++i) x[i] -= lk[i] * xk;
    }
  }
  count_flops(static_cast<uint64_t>(m) * m * X.cols);
  X = std::move(tmp);
}

void LuFactors::solve_upper_in_place(Matrix& X) const {
  const int64_t m = n();
  if (X.rows != m) fail("LuFactors::solve_upper: shape mismatch");
  for (int64_t j = 0; j < X.cols; ++j) {
    double* x = X.col(j);
    for (int64_t k = m - 1; k >= 0; --k) {
      x[k] /= lu(k, k);
      const double xk = x[k];
      const double* uk = lu.col(k);
      for (int64_t i = 0; i < k; ++i) x[i] -= uk[i] * xk;
    }
  }
  count_flops(static_cast<uint64_t>(m) * m * X.cols);
}

void LuFactors::solve_upper_right_in_place(Matrix& X) const {
  const int64_t m = n();
  if (X.cols != m) fail("LuFactors::solve_upper_right: shape mismatch");
  for (int64_t k = 0; k < m; ++k) {
    const double inv = 1.0 / lu(k, k);
    double* xk = X.col(k);
    for (int64_t i = 0; i < X.rows; ++i) xk[i] *= inv;
    for (int64_t j = k + 1; j < m; ++j) {
      const double ukj = lu(k, j);
      if (ukj == 0.0) continue;
      double* xj = X.col(j);
      for (int64_t i = 0; i < X.rows; ++i) xj[i] -= ukj * xk[i];
    }
  }
  count_flops(static_cast<uint64_t>(m) * m * X.rows);
}

Matrix trsm(const Matrix& T, const Matrix& B, Side side, Uplo uplo, bool unit_diag) {
  if (T.rows != T.cols) fail("trsm: T not square");
  const int64_t m = T.rows;
  if (!unit_diag)
    for (int64_t i = 0; i < m; ++i)
      if (T(i, i) == 0.0) fail("trsm: zero diagonal entry at " + std::to_string(i));

  if (side == Side::left) {
    if (B.rows != m) fail("trsm: shape mismatch");
    Matrix X = B;
    if (uplo == Uplo::lower) {
      for (int64_t j = 0; j < X.cols; ++j) {
        double* x = X.col(j);
        for (int64_t k = 0; k < m; ++k) {
          if (!unit_diag) x[k] /= T(k, k);
          const double xk = x[k];
          const double* tk = T.col(k);
          for (int64_t i = k + 1; i < m; ++i) x[i] -= tk[i] * xk;
        }
      }
    } else {
      for (int64_t j = 0; j < X.cols; ++j) {
        double* x = X.col(j);
        for (int64_t k = m - 1; k >= 0; --k) {
          if (!unit_diag) x[k] /= T(k, k);
          const double xk = x[k];
          const double* tk = T.col(k);
          for (int64_t i = 0; i < k; ++i) x[i] -= tk[i] * xk;
        }
      }
    }
    count_flops(static_cast<uint64_t>(m) * m * X.cols);
    return X;
  }
  // Right side via the transposed left solve.
  if (B.cols != m) fail("trsm: shape mismatch");
  Matrix Xt = transpose(B);
  Matrix Tt = transpose(T);
  Uplo flipped = (uplo == Uplo::lower) ? Uplo::upper : Uplo::lower;
  Matrix Yt = trsm(Tt, Xt, Side::left, flipped, unit_diag);
  return transpose(Yt);
}

double norm_frobenius(const Matrix& A) {
  double s = 0.0;
  const double* d = A.data();
  for (int64_t i = 0; i < A.size(); ++i) s += d[i] * d[i];
  return std::sqrt(s);
}

double norm_max_abs(const Matrix& A) {
  double s = 0.0;
  const double* d = A.data();
  for (int64_t i = 0; i < A.size(); ++i) s = std::max(s, std::abs(d[i]));
  return s;
}

double rel_error(const Matrix& x, const Matrix& x_ref) {
  if (x.rows != x_ref.rows || x.cols != x_ref.cols) fail("rel_error: shape mismatch");
  double num = 0.0, den = 0.0;
  const double* a = x.data();
  const double* b = x_ref.data();
  for (int64_t i = 0; i < x.size(); ++i) {
    const double d = a[i] - b[i];
    num += d * d;
    den += b[i] * b[i];
  }
  if (den == 0.0) fail("rel_error: reference is all zero");
  return std::sqrt(num / den);
}

Matrix apply_permutation_rows(const Permutation& p, const Matrix& A) {
  if (p.size() != A.rows) fail("apply_permutation_rows: size mismatch");
  Matrix B(A.rows, A.cols);
  for (int64_t j = 0; j < A.cols; ++j)
    for (int64_t i = 0; i < A.rows; ++i) B(i, j) = A(p.forward[i], j);
  return B;
}

}  // namespace h2ulv
