// Development diagnostic 3: compare the merged upper-level blocks produced by
// the h2/nodep leaf pass against ground truth computed from the explicit
// row-combined matrix Atilde = (I - Z) A.
#include <cstdio>
#include <cstdlib>

#include "h2ulv/compression.hpp"
#include "h2ulv/report.hpp"
#include "h2ulv/solve.hpp"
#include "h2ulv/ulv.hpp"

using namespace h2ulv;

int main(int argc, char** argv) {
  RunConfig cfg;
  cfg.n = argc > 1 ? std::atoll(argv[1]) : 1024;
  cfg.leaf_size = argc > 2 ? std::atoll(argv[2]) : 128;
  cfg.tol = argc > 3 ? std::atof(argv[3]) : 1e-8;
  cfg.geometry = argc > 4 ? argv[4] : "cube";
  cfg.structure = StructureVariant::h2;
  cfg.oracle = false;
  Pipeline pipe(cfg);
  pipe.factor();
  const HMatrix& H = pipe.hmatrix();
  const ULVFactors& f = pipe.factors();
  const int L = H.tree.levels;
  const int64_t n = cfg.n;
  const int64_t m = H.tree.num_leaves();
  auto rng = [&](int64_t k) { return H.cluster_range(L, k); };

  const PointCloud& cloud = *H.cloud;
  Matrix A = assemble_block(H.kernel, cloud, {0, n}, {0, n});
  const LevelFactors& lf = f.levels[0];

  // Atilde = (I - Z) A.
  Matrix At = A;
  for (int64_t k = 0; k < m; ++k)
    for (int64_t p : lf.sys.near_cols[k]) {
      if (p == k) continue;
      Matrix Zkp = lf.sys.diag_lu[p].solve_right(H.leaf_block(k, p));
      Matrix rowp = A.block(rng(p).begin, 0, rng(p).size(), n);
      At.add_block(rng(k).begin, 0, matmul(Zkp, rowp, false, false, -1.0), 1.0);
    }

  // Exact skeleton pieces of every leaf pair.
  std::vector<Matrix> Uq(m), Vq(m);
  for (int64_t k = 0; k < m; ++k) {
    Uq[k] = hconcat(f.bases.U[L][k].Qr, f.bases.U[L][k].Qs);
    Vq[k] = hconcat(f.bases.V[L][k].Qr, f.bases.V[L][k].Qs);
  }
  auto exact_ss = [&](int64_t k, int64_t j) {
    Matrix B = At.block(rng(k).begin, rng(j).begin, rng(k).size(), rng(j).size());
    Matrix S = matmul(matmul(Uq[k], B, true, false), Vq[j]);
    const int64_t rk = f.bases.rank(L, k), rj = f.bases.rank(L, j);
    if (k != j) return S.block(S.rows - rk, S.cols - rj, rk, rj);
    ClusterFactors e = eliminate_block(S, S.rows - rk, 1e-13);
    return S.block(S.rows - rk, S.cols - rk, rk, rk);
  };

  if (f.levels.size() < 2) {
    std::printf("no processed upper level\n");
    return 0;
  }
  const LevelFactors& lf2 = f.levels[1];
  const int lvl2 = lf2.level;
  const int64_t m2 = static_cast<int64_t>(lf2.dims.size());
  double worst = 0;
  for (int64_t I = 0; I < m2; ++I) {
    for (int64_t J : lf2.sys.near_cols[I]) {
      const Matrix& got = lf2.sys.block(I, J);
      Matrix want(got.rows, got.cols);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const int64_t ci = 2 * I + a, cj = 2 * J + b;
          Matrix piece = exact_ss(ci, cj);
          want.set_block(a == 0 ? 0 : f.bases.rank(L, 2 * I),
                         b == 0 ? 0 : f.bases.rank(L, 2 * J), piece);
        }
      Matrix diff = got;
      diff.add_block(0, 0, want, -1.0);
      const double e = norm_frobenius(diff) / std::max(1e-300, norm_frobenius(want));
      if (e > worst) worst = e;
      if (e > 100 * cfg.tol) {
        std::printf("merged (%lld,%lld): rel diff %.3e  |want| %.3e\n", (long long)I,
                    (long long)J, e, norm_frobenius(want));
        // localize by child pair
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            const int64_t ci = 2 * I + a, cj = 2 * J + b;
            Matrix piece = exact_ss(ci, cj);
            Matrix gpiece = got.block(a == 0 ? 0 : f.bases.rank(L, 2 * I),
                                      b == 0 ? 0 : f.bases.rank(L, 2 * J), piece.rows,
                                      piece.cols);
            Matrix d2 = gpiece;
            d2.add_block(0, 0, piece, -1.0);
            BlockKind kind = H.structure.kind(L, ci, cj);
            const char* kn = ci == cj                      ? "diag"
                             : kind == BlockKind::dense   ? "dense"
                             : kind == BlockKind::lowrank ? "far"
                                                          : "covered";
            std::printf("   child (%lld,%lld) %s: rel %.3e (|want| %.3e)\n", (long long)ci,
                        (long long)cj, kn,
                        norm_frobenius(d2) / std::max(1e-300, norm_frobenius(piece)),
                        norm_frobenius(piece));
          }
      }
    }
  }
  std::printf("worst merged-block rel diff: %.3e\n", worst);
  return 0;
}
