// Development diagnostic: explicitly form the row-combined leaf system
// Atilde = (I - Z) A on a small problem and measure which off-diagonal
// content is not representable in the fill-augmented shared bases.
#include <cstdio>
#include <cstdlib>

#include "h2ulv/compression.hpp"
#include "h2ulv/report.hpp"
#include "h2ulv/solve.hpp"
#include "h2ulv/ulv.hpp"

using namespace h2ulv;

int main(int argc, char** argv) {
  const int64_t n = argc > 1 ? std::atoll(argv[1]) : 256;
  const int64_t leaf = argc > 2 ? std::atoll(argv[2]) : 32;
  const double tol = argc > 3 ? std::atof(argv[3]) : 1e-6;

  RunConfig cfg;
  cfg.n = n;
  cfg.leaf_size = leaf;
  cfg.tol = tol;
  cfg.structure = StructureVariant::h2;
  cfg.oracle = false;
  Pipeline pipe(cfg);
  pipe.build();
  const HMatrix& H = pipe.hmatrix();
  const int L = H.tree.levels;
  const int64_t m = H.tree.num_clusters(L);

  FactorOptions opts;
  opts.variant = FactorVariant::h2nodep;
  opts.tol = tol;
  FactorInputs in = prepare_factor_inputs(H, opts);
  const SharedBasisSet& bases = in.bases;

  // Full kernel matrix on the reordered cloud.
  const PointCloud& cloud = *H.cloud;
  Matrix A = assemble_block(H.kernel, cloud, {0, n}, {0, n});

  // Z row combination from the leaf dense blocks.
  auto rng = [&](int64_t k) { return H.cluster_range(L, k); };
  Matrix Atilde = A;
  for (int64_t k = 0; k < m; ++k) {
    for (int64_t p : in.leaf_sys.near_cols[k]) {
      if (p == k) continue;
      Matrix Zkp = in.leaf_sys.diag_lu[p].solve_right(H.leaf_block(k, p));
      // row block k of Atilde -= Zkp * (row block p of A)
      Matrix rowp = A.block(rng(p).begin, 0, rng(p).size(), n);
      Matrix upd = matmul(Zkp, rowp, false, false, -1.0);
      Atilde.add_block(rng(k).begin, 0, upd, 1.0);
    }
  }

  // Blockwise analysis of Atilde's off-diagonal content.
  double worst_far = 0, worst_dense = 0, worst_cov = 0;
  for (int64_t k = 0; k < m; ++k) {
    const Matrix& Ur = bases.U[L][k].Qr;
    for (int64_t j = 0; j < m; ++j) {
      if (j == k) continue;
      Matrix B = Atilde.block(rng(k).begin, rng(j).begin, rng(k).size(), rng(j).size());
      const double nb = norm_frobenius(B);
      if (nb == 0) continue;
      const double drop = norm_frobenius(matmul(Ur, B, true, false)) / nb;
      BlockKind kind = H.structure.kind(L, k, j);
      const char* kn = kind == BlockKind::dense      ? "dense"
                       : kind == BlockKind::lowrank ? "far"
                                                    : "covered";
      if (kind == BlockKind::dense) worst_dense = std::max(worst_dense, drop);
      else if (kind == BlockKind::lowrank) worst_far = std::max(worst_far, drop);
      else worst_cov = std::max(worst_cov, drop);
      if (drop > 50 * tol)
        std::printf("  block (%lld,%lld) %s: |Ur^T B|/|B| = %.3e  |B| = %.3e\n",
                    (long long)k, (long long)j, kn, drop, nb);
    }
  }
  std::printf("worst row-side drop: dense %.3e far %.3e covered %.3e (tol %.1e)\n", worst_dense,
              worst_far, worst_cov, tol);

  // Ground truth check of the combination itself: solve Atilde y = (I-Z) b
  // densely and compare against the dense solve of A x = b.
  Matrix ones(n, 1);
  for (int64_t i = 0; i < n; ++i) ones(i, 0) = 1.0;
  Matrix b = matmul(A, ones);
  Matrix bt = b;
  for (int64_t k = 0; k < m; ++k)
    for (int64_t p : in.leaf_sys.near_cols[k]) {
      if (p == k) continue;
      Matrix gp = in.leaf_sys.diag_lu[p].solve(b.block(rng(p).begin, 0, rng(p).size(), 1));
      bt.add_block(rng(k).begin, 0, matmul(H.leaf_block(k, p), gp), -1.0);
    }
  LuFactors lu_t = lu_factor(Atilde, 1e-15, "Atilde");
  Matrix y = lu_t.solve(bt);
  std::printf("dense solve of the combined system vs exact: rel err %.3e\n", rel_error(y, ones));
  return 0;
}
