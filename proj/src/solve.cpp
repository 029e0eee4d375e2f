#include "h2ulv/solve.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "h2ulv/flops.hpp"

namespace h2ulv {

namespace {

Matrix seg(const Matrix& v, int64_t at, int64_t len) { return v.block(at, 0, len, 1); }

// One right-hand side through the level-parallel factors (blr2/hss/h2nodep).
Matrix solve_one(const ULVFactors& f, const Matrix& b_perm) {
  const HMatrix& H = *f.H;
  const int leaf = H.tree.levels;

  // Leaf segmentation.
  std::vector<Matrix> r(H.tree.num_leaves());
  for (int64_t k = 0; k < H.tree.num_leaves(); ++k) {
    IndexRange rg = H.cluster_range(leaf, k);
    r[k] = b_perm.block(rg.begin, 0, rg.size(), 1);
  }

  const bool dep = f.variant == FactorVariant::h2dep;
  std::vector<std::vector<Matrix>> z_all(f.levels.size());
  std::vector<std::vector<Matrix>> c_dep(f.levels.size());

  // Upward pass.
  for (size_t li = 0; li < f.levels.size(); ++li) {
    const LevelFactors& lf = f.levels[li];
    const int lvl = lf.level;
    const int64_t m = static_cast<int64_t>(lf.dims.size());
    std::vector<Matrix> s(m);
    z_all[li].resize(m);

    if (dep) {
      const DepLevel& log = f.dep[li];
      std::vector<Matrix>& c = c_dep[li];
      c.resize(m);
      for (int64_t k = 0; k < m; ++k) c[k] = matmul(log.U0[k], r[k], true, false);
      for (const DepOp& opv : log.ops) {
        if (std::holds_alternative<DepBasisOp>(opv)) {
          const auto& op = std::get<DepBasisOp>(opv);
          if (op.row_side) c[op.cluster] = matmul(op.omega, c[op.cluster]);
          continue;
        }
        const auto& op = std::get<DepElimOp>(opv);
        if (op.rdim == 0) continue;
        Matrix z = c[op.k].block(0, 0, op.rdim, 1);
        op.pivot.solve_lower_in_place(z);
        // Own skeleton rows.
        const int64_t soff = lf.dims[op.k] - op.sdim;
        if (op.sdim > 0) c[op.k].add_block(soff, 0, matmul(op.lsr, z), -1.0);
        for (const DepCoupling& cp : op.col) {
          const int64_t i = cp.partner;
          const int64_t off = cp.skeleton_only ? lf.dims[i] - lf.ranks[i] : 0;
          c[i].add_block(off, 0, matmul(cp.strip, z), -1.0);
        }
        z_all[li][op.k] = std::move(z);
      }
      for (int64_t k = 0; k < m; ++k)
        s[k] = c[k].block(lf.dims[k] - lf.ranks[k], 0, lf.ranks[k], 1);
    } else {
      std::vector<Matrix> rt(m);
      if (lf.use_z) {
        std::vector<Matrix> g(m);
        for (int64_t p = 0; p < m; ++p) g[p] = lf.sys.diag_lu[p].solve(r[p]);
        for (int64_t k = 0; k < m; ++k) {
          rt[k] = r[k];
          for (int64_t p : lf.sys.near_cols[k]) {
            if (p == k) continue;
            rt[k].add_block(0, 0, matmul(lf.sys.block(k, p), g[p]), -1.0);
          }
        }
      } else {
        rt = r;
      }
      for (int64_t k = 0; k < m; ++k) {
        Matrix c = matmul(hconcat(f.bases.U[lvl][k].Qr, f.bases.U[lvl][k].Qs), rt[k], true, false);
        const ClusterFactors& el = lf.elim[k];
        Matrix z = c.block(0, 0, el.rdim, 1);
        if (el.rdim > 0) el.pivot.solve_lower_in_place(z);
        s[k] = c.block(el.rdim, 0, el.sdim, 1);
        if (el.rdim > 0 && el.sdim > 0) s[k].add_block(0, 0, matmul(el.lsr, z), -1.0);
        z_all[li][k] = std::move(z);
      }
    }

    // Stack skeleton parts for the next system.
    if (f.variant == FactorVariant::blr2 || li + 1 == f.levels.size()) {
      if (f.variant != FactorVariant::blr2 && f.levels[li].level - 1 != f.cutoff_level)
        throw std::logic_error("solve: level bookkeeping mismatch");
      if (f.variant == FactorVariant::blr2) {
        r = std::move(s);
      } else {
        const int64_t mp = int64_t(1) << f.cutoff_level;
        std::vector<Matrix> rp(mp);
        for (int64_t I = 0; I < mp; ++I) rp[I] = vconcat(s[2 * I], s[2 * I + 1]);
        r = std::move(rp);
      }
    } else {
      const int64_t mp = m / 2;
      std::vector<Matrix> rp(mp);
      for (int64_t I = 0; I < mp; ++I) rp[I] = vconcat(s[2 * I], s[2 * I + 1]);
      r = std::move(rp);
    }
  }

  // Top dense solve.
  Matrix rhs(f.top.n(), 1);
  {
    int64_t at = 0;
    for (const auto& piece : r) {
      rhs.set_block(at, 0, piece);
      at += piece.rows;
    }
  }
  Matrix y = f.top.solve(rhs);

  // Split the top solution back into per-cluster pieces.
  std::vector<Matrix> ys(f.cutoff_dims.size());
  {
    int64_t at = 0;
    for (size_t k = 0; k < f.cutoff_dims.size(); ++k) {
      ys[k] = y.block(at, 0, f.cutoff_dims[k], 1);
      at += f.cutoff_dims[k];
    }
  }

  // Downward pass.
  for (int64_t li = static_cast<int64_t>(f.levels.size()) - 1; li >= 0; --li) {
    const LevelFactors& lf = f.levels[li];
    const int lvl = lf.level;
    const int64_t m = static_cast<int64_t>(lf.dims.size());

    // Skeleton parts of this level's clusters from the parent pieces.
    std::vector<Matrix> yskel(m);
    if (f.variant == FactorVariant::blr2) {
      yskel = std::move(ys);
    } else {
      for (int64_t k = 0; k < m; ++k) {
        const int64_t parent = k >> 1;
        const int64_t off = (k & 1) ? lf.ranks[k - 1] : 0;
        yskel[k] = ys[parent].block(off, 0, lf.ranks[k], 1);
      }
    }

    std::vector<Matrix> yfull(m);
    if (dep) {
      const DepLevel& log = f.dep[li];
      std::vector<Matrix> yv(m);
      for (int64_t k = 0; k < m; ++k) {
        yv[k] = Matrix(lf.dims[k], 1);
        yv[k].set_block(lf.dims[k] - lf.ranks[k], 0, yskel[k]);
      }
      for (int64_t t = static_cast<int64_t>(log.ops.size()) - 1; t >= 0; --t) {
        if (std::holds_alternative<DepBasisOp>(log.ops[t])) {
          const auto& op = std::get<DepBasisOp>(log.ops[t]);
          if (!op.row_side) yv[op.cluster] = matmul(op.omega, yv[op.cluster], true, false);
          continue;
        }
        const auto& op = std::get<DepElimOp>(log.ops[t]);
        if (op.rdim == 0) continue;
        Matrix rhsk = z_all[li][op.k];
        const int64_t soff = lf.dims[op.k] - op.sdim;
        if (op.sdim > 0)
          rhsk.add_block(0, 0, matmul(op.urs, yv[op.k].block(soff, 0, op.sdim, 1)), -1.0);
        for (const DepCoupling& cp : op.row) {
          const int64_t j = cp.partner;
          Matrix part = cp.skeleton_only
                            ? yv[j].block(lf.dims[j] - lf.ranks[j], 0, lf.ranks[j], 1)
                            : yv[j];
          rhsk.add_block(0, 0, matmul(cp.strip, part), -1.0);
        }
        op.pivot.solve_upper_in_place(rhsk);
        yv[op.k].set_block(0, 0, rhsk);
      }
      for (int64_t k = 0; k < m; ++k) yfull[k] = matmul(log.V0[k], yv[k]);
    } else {
      for (int64_t k = 0; k < m; ++k) {
        const ClusterFactors& el = lf.elim[k];
        Matrix yr = z_all[li][k];
        if (el.rdim > 0) {
          if (el.sdim > 0) yr.add_block(0, 0, matmul(el.urs, yskel[k]), -1.0);
          el.pivot.solve_upper_in_place(yr);
        }
        Matrix stacked = vconcat(yr, yskel[k]);
        yfull[k] = matmul(hconcat(f.bases.V[lvl][k].Qr, f.bases.V[lvl][k].Qs), stacked);
      }
    }
    ys = std::move(yfull);
  }

  // ys now holds the leaf segments in tree ordering.
  Matrix x_perm(b_perm.rows, 1);
  for (int64_t k = 0; k < H.tree.num_leaves(); ++k) {
    IndexRange rg = H.cluster_range(leaf, k);
    x_perm.set_block(rg.begin, 0, ys[k]);
  }
  return x_perm;
}

}  // namespace

Matrix solve(const ULVFactors& f, const Matrix& b) {
  PhaseScope phase(Phase::solve);
  if (!f.H) throw std::invalid_argument("solve: empty factors");
  const int64_t n = f.n();
  if (b.rows != n) throw std::invalid_argument("solve: length mismatch");
  require_finite(b, "solve");
  const auto& order = f.H->tree.original_index;
  Matrix x(n, b.cols);
  for (int64_t col = 0; col < b.cols; ++col) {
    Matrix bp(n, 1);
    for (int64_t i = 0; i < n; ++i) bp(i, 0) = b(order[i], col);
    Matrix xp = solve_one(f, bp);
    for (int64_t i = 0; i < n; ++i) x(order[i], col) = xp(i, 0);
  }
  return x;
}

Matrix assemble_full_matrix(const PointCloud& cloud, const KernelSpec& kernel, int64_t guard) {
  const int64_t n = cloud.size();
  if (n > guard)
    throw std::runtime_error("dense oracle guard exceeded: N = " + std::to_string(n));
  PhaseScope phase(Phase::oracle);
  return assemble_block(kernel, cloud, {0, n}, {0, n});
}

Matrix matvec_dense_oracle(const PointCloud& cloud, const KernelSpec& kernel, const Matrix& x,
                           int64_t guard) {
  Matrix A = assemble_full_matrix(cloud, kernel, guard);
  PhaseScope phase(Phase::oracle);
  return matmul(A, x);
}

Matrix dense_solve_oracle(const PointCloud& cloud, const KernelSpec& kernel, const Matrix& b,
                          int64_t guard) {
  Matrix A = assemble_full_matrix(cloud, kernel, guard);
  PhaseScope phase(Phase::oracle);
  LuFactors lu = lu_factor(A, 1e-15, "dense oracle");
  return lu.solve(b);
}

void write_vector(const Matrix& v, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_vector: cannot open " + path);
  char buf[64];
  for (int64_t i = 0; i < v.rows; ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", v(i, 0));
    f << buf;
  }
}

Matrix read_vector(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_vector: cannot open " + path);
  std::vector<double> vals;
  double x;
  while (f >> x) vals.push_back(x);
  Matrix v(static_cast<int64_t>(vals.size()), 1);
  for (size_t i = 0; i < vals.size(); ++i) v(static_cast<int64_t>(i), 0) = vals[i];
  return v;
}

}  // namespace h2ulv
