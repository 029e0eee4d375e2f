// Development diagnostic 2: verify that after the leaf pass of the h2/nodep
// driver, the merged upper-level system together with the forwarded RHS still
// has the restriction of the exact solution as its solution.
#include <cstdio>
#include <cstdlib>

#include "h2ulv/compression.hpp"
#include "h2ulv/report.hpp"
#include "h2ulv/solve.hpp"
#include "h2ulv/ulv.hpp"

using namespace h2ulv;

int main(int argc, char** argv) {
  RunConfig cfg;
  cfg.n = argc > 1 ? std::atoll(argv[1]) : 512;
  cfg.leaf_size = argc > 2 ? std::atoll(argv[2]) : 64;
  cfg.tol = argc > 3 ? std::atof(argv[3]) : 1e-8;
  cfg.geometry = argc > 4 ? argv[4] : "line";
  cfg.structure = StructureVariant::h2;
  cfg.oracle = false;
  Pipeline pipe(cfg);
  pipe.factor();
  const HMatrix& H = pipe.hmatrix();
  const ULVFactors& f = pipe.factors();
  const int L = H.tree.levels;
  const int64_t n = cfg.n;
  const int64_t m_leaf = H.tree.num_leaves();

  // Exact solution x = ones on the reordered cloud; b = A x.
  const PointCloud& cloud = *H.cloud;
  Matrix A = assemble_block(H.kernel, cloud, {0, n}, {0, n});
  Matrix ones(n, 1);
  for (int64_t i = 0; i < n; ++i) ones(i, 0) = 1.0;
  Matrix b = matmul(A, ones);

  // Leaf forward pass (mirror of the solver).
  const LevelFactors& lf = f.levels[0];
  auto rng = [&](int64_t k) { return H.cluster_range(L, k); };
  std::vector<Matrix> r(m_leaf), g(m_leaf);
  for (int64_t k = 0; k < m_leaf; ++k) r[k] = b.block(rng(k).begin, 0, rng(k).size(), 1);
  for (int64_t p = 0; p < m_leaf; ++p) g[p] = lf.sys.diag_lu[p].solve(r[p]);
  std::vector<Matrix> s(m_leaf), z(m_leaf);
  for (int64_t k = 0; k < m_leaf; ++k) {
    Matrix rt = r[k];
    for (int64_t p : lf.sys.near_cols[k]) {
      if (p == k) continue;
      rt.add_block(0, 0, matmul(lf.sys.block(k, p), g[p]), -1.0);
    }
    Matrix c = matmul(hconcat(f.bases.U[L][k].Qr, f.bases.U[L][k].Qs), rt, true, false);
    const ClusterFactors& el = lf.elim[k];
    z[k] = c.block(0, 0, el.rdim, 1);
    if (el.rdim > 0) el.pivot.solve_lower_in_place(z[k]);
    s[k] = c.block(el.rdim, 0, el.sdim, 1);
    if (el.rdim > 0 && el.sdim > 0) s[k].add_block(0, 0, matmul(el.lsr, z[k]), -1.0);
  }

  // True skeleton unknowns: y^S_k = Vs_k^T x_k.
  std::vector<Matrix> ys(m_leaf);
  for (int64_t k = 0; k < m_leaf; ++k) {
    Matrix xk = ones.block(rng(k).begin, 0, rng(k).size(), 1);
    ys[k] = matmul(f.bases.V[L][k].Qs, xk, true, false);
  }

  if (f.levels.size() < 2) {
    std::printf("no processed upper level; nothing to check\n");
    return 0;
  }
  const LevelFactors& lf2 = f.levels[1];
  const int lvl2 = lf2.level;
  const int64_t m2 = static_cast<int64_t>(lf2.dims.size());

  // Merged RHS and merged true unknowns.
  std::vector<Matrix> r2(m2), y2(m2);
  for (int64_t I = 0; I < m2; ++I) {
    r2[I] = vconcat(s[2 * I], s[2 * I + 1]);
    y2[I] = vconcat(ys[2 * I], ys[2 * I + 1]);
  }

  // Assemble the level-2 system: merged near blocks + projected far content.
  BigBasisLayer layer = make_leaf_layer(f.bases);
  std::vector<int64_t> off(m2 + 1, 0);
  for (int64_t k = 0; k < m2; ++k) off[k + 1] = off[k] + lf2.dims[k];
  Matrix M2(off[m2], off[m2]);
  for (int64_t i = 0; i < m2; ++i) {
    for (int64_t j : lf2.sys.near_cols[i]) M2.set_block(off[i], off[j], lf2.sys.block(i, j));
    for (int64_t j : H.structure.level[lvl2].far_cols[i])
      M2.set_block(off[i], off[j], project_pair_to_merged(H, layer, lvl2, i, j));
  }
  Matrix y2v(off[m2], 1), r2v(off[m2], 1);
  for (int64_t k = 0; k < m2; ++k) {
    y2v.set_block(off[k], 0, y2[k]);
    r2v.set_block(off[k], 0, r2[k]);
  }
  Matrix resid = matmul(M2, y2v);
  resid.add_block(0, 0, r2v, -1.0);
  std::printf("merged-system residual |M2 y2 - r2| / |r2| = %.3e\n",
              norm_frobenius(resid) / norm_frobenius(r2v));

  // Dense solve of the merged system, then compare against the true y2.
  LuFactors lu2 = lu_factor(M2, 1e-15, "M2");
  Matrix y2_solved = lu2.solve(r2v);
  std::printf("dense-solved merged system vs true skeletons: rel err %.3e\n",
              rel_error(y2_solved, y2v));

  // Also measure leaf redundant recovery: y^R_k from z and true y^S.
  double worst = 0;
  for (int64_t k = 0; k < m_leaf; ++k) {
    const ClusterFactors& el = lf.elim[k];
    if (el.rdim == 0) continue;
    Matrix yr = z[k];
    if (el.sdim > 0) yr.add_block(0, 0, matmul(el.urs, ys[k]), -1.0);
    el.pivot.solve_upper_in_place(yr);
    Matrix xk = ones.block(rng(k).begin, 0, rng(k).size(), 1);
    Matrix yr_true = matmul(f.bases.V[L][k].Qr, xk, true, false);
    yr.add_block(0, 0, yr_true, -1.0);
    worst = std::max(worst, norm_frobenius(yr) / std::max(1.0, norm_frobenius(yr_true)));
  }
  std::printf("worst leaf redundant recovery error (given true y^S): %.3e\n", worst);
  return 0;
}
