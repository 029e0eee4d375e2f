#include "h2ulv/compression.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "h2ulv/flops.hpp"
#include "h2ulv/parallel.hpp"

namespace h2ulv {

const Matrix& DenseSystem::block(int64_t i, int64_t j) const {
  auto it = slots.find({i, j});
  if (it == slots.end()) throw std::out_of_range("DenseSystem::block: no dense block");
  const int64_t s = it->second;
  return s >= 0 ? owned[s] : *views[-1 - s];
}

void DenseSystem::put(int64_t i, int64_t j, Matrix&& B) {
  slots[{i, j}] = static_cast<int64_t>(owned.size());
  owned.push_back(std::move(B));
}

void DenseSystem::put_view(int64_t i, int64_t j, const Matrix* B) {
  slots[{i, j}] = -1 - static_cast<int64_t>(views.size());
  views.push_back(B);
}

bool DenseSystem::has_offdiag() const {
  for (int64_t i = 0; i < m(); ++i)
    for (int64_t j : near_cols[i])
      if (j != i) return true;
  return false;
}

int64_t DenseSystem::total_dim() const {
  int64_t s = 0;
  for (int64_t d : dims) s += d;
  return s;
}

DenseSystem leaf_dense_system(const HMatrix& H) {
  DenseSystem sys;
  const int lvl = H.leaf_level();
  const int64_t m = H.tree.num_clusters(lvl);
  sys.dims.resize(m);
  for (int64_t i = 0; i < m; ++i) sys.dims[i] = H.cluster_range(lvl, i).size();
  sys.near_cols = H.structure.level[lvl].near_cols;
  for (int64_t i = 0; i < m; ++i)
    for (size_t c = 0; c < sys.near_cols[i].size(); ++c)
      sys.put_view(i, sys.near_cols[i][c], &H.leaf_dense[i][c]);
  return sys;
}

FillInSet precompute_fillins(DenseSystem& sys, double pivot_tol, int threads) {
  PhaseScope phase(Phase::fills);
  FillInSet out;
  if (!sys.has_offdiag()) return out;
  const int64_t m = sys.m();

  sys.diag_lu.resize(m);
  parallel_for(m, threads, [&](int64_t p) {
    sys.diag_lu[p] = lu_factor(sys.block(p, p), pivot_tol,
                               ("diagonal block " + std::to_string(p)).c_str());
  });

  // A_pp^{-1} A_pj for every off-diagonal dense block, computed once.
  std::map<PairKey, Matrix> w;
  std::vector<PairKey> offdiag;
  for (int64_t p = 0; p < m; ++p)
    for (int64_t j : sys.near_cols[p])
      if (j != p) offdiag.push_back({p, j});
  std::vector<Matrix> wstore(offdiag.size());
  parallel_for(static_cast<int64_t>(offdiag.size()), threads, [&](int64_t t) {
    auto [p, j] = offdiag[t];
    wstore[t] = sys.diag_lu[p].solve(sys.block(p, j));
  });
  for (size_t t = 0; t < offdiag.size(); ++t) w[offdiag[t]] = std::move(wstore[t]);

  // Targets: ordered pairs (c, j) sharing a common dense neighbor p.
  std::vector<PairKey> targets;
  {
    std::map<PairKey, char> seen;
    for (int64_t p = 0; p < m; ++p)
      for (int64_t c : sys.near_cols[p]) {
        if (c == p) continue;
        for (int64_t j : sys.near_cols[p]) {
          if (j == p) continue;
          seen[{c, j}] = 1;
        }
      }
    for (auto& [key, _] : seen) targets.push_back(key);
  }

  std::vector<Matrix> fstore(targets.size());
  parallel_for(static_cast<int64_t>(targets.size()), threads, [&](int64_t t) {
    auto [c, j] = targets[t];
    Matrix F(sys.dims[c], sys.dims[j]);
    for (int64_t p : sys.near_cols[c]) {
      if (p == c || p == j) continue;
      auto it = w.find({p, j});
      if (it == w.end()) continue;
      gemm_acc(F, sys.block(c, p), it->second, -1.0);
    }
    fstore[t] = std::move(F);
  });
  for (size_t t = 0; t < targets.size(); ++t) out.fills[targets[t]] = std::move(fstore[t]);
  return out;
}

SharedBasis basis_from_members(const std::vector<Matrix>& members, int64_t dim,
                               const BasisBuildOptions& opts, int64_t min_rank) {
  int64_t width = 0;
  for (const auto& M : members) width += M.cols;
  SharedBasis out;
  if (width == 0) {
    out.Qs = Matrix(dim, 0);
    out.Qr = Matrix::identity(dim);
    if (min_rank > 0) {
      out.Qs = out.Qr.block(0, 0, dim, min_rank);
      out.Qr = out.Qr.block(0, min_rank, dim, dim - min_rank);
    }
    return out;
  }
  Matrix concat(dim, width);
  std::vector<int64_t> offsets{0};
  int64_t at = 0;
  for (const auto& M : members) {
    if (M.rows != dim) throw std::invalid_argument("basis_from_members: member row mismatch");
    concat.set_block(0, at, M);
    at += M.cols;
    offsets.push_back(at);
  }
  RankDecision rd{opts.tol, opts.cap};
  PivotedQr qr = qr_pivoted_members(concat, rd, offsets, opts.tol * opts.member_tol_factor);
  out.Qs = std::move(qr.Qs);
  out.Qr = std::move(qr.Qr);
  if (out.rank() < min_rank) {
    const int64_t extra = std::min(min_rank, dim) - out.rank();
    if (extra > 0) {
      out.Qs = hconcat(out.Qs, out.Qr.block(0, 0, dim, extra));
      out.Qr = out.Qr.block(0, extra, dim, out.Qr.cols - extra);
    }
  }
  return out;
}

namespace {

// Row concatenation members for one leaf cluster: fills first, then the
// admissible blocks of its own level, then the restrictions of every
// coarser-level admissible block that overlaps this cluster's rows.
std::vector<Matrix> leaf_row_members(const HMatrix& H, const FillInSet& fills, int64_t i) {
  const int lvl = H.leaf_level();
  std::vector<Matrix> members;
  for (const auto& [key, F] : fills.fills)
    if (key.first == i) members.push_back(F);
  IndexRange rows = H.cluster_range(lvl, i);
  for (int64_t j : H.structure.level[lvl].far_cols[i])
    members.push_back(assemble_block(H.kernel, *H.cloud, rows, H.cluster_range(lvl, j)));
  for (auto [l2, J] : ancestor_far_partners(H.structure, lvl, i))
    members.push_back(assemble_block(H.kernel, *H.cloud, rows, H.cluster_range(l2, J)));
  return members;
}

std::vector<Matrix> leaf_col_members(const HMatrix& H, const FillInSet& fills, int64_t j) {
  const int lvl = H.leaf_level();
  std::vector<Matrix> members;
  for (const auto& [key, F] : fills.fills)
    if (key.second == j) members.push_back(transpose(F));
  IndexRange cols = H.cluster_range(lvl, j);
  for (int64_t i : H.structure.level[lvl].far_cols[j])
    members.push_back(transpose(assemble_block(H.kernel, *H.cloud, H.cluster_range(lvl, i), cols)));
  for (auto [l2, I] : ancestor_far_partners(H.structure, lvl, j))
    members.push_back(transpose(assemble_block(H.kernel, *H.cloud, H.cluster_range(l2, I), cols)));
  return members;
}

}  // namespace

std::vector<std::pair<int, int64_t>> ancestor_far_partners(const BlockStructure& bs, int lvl,
                                                           int64_t K) {
  std::vector<std::pair<int, int64_t>> out;
  int64_t a = K;
  for (int l2 = lvl - 1; l2 >= 1; --l2) {
    a >>= 1;
    if (bs.variant == StructureVariant::blr2) break;  // flat: no hierarchy
    for (int64_t J : bs.level[l2].far_cols[a]) out.push_back({l2, J});
  }
  return out;
}

SharedBasisSet build_leaf_bases(const HMatrix& H, const FillInSet& fills, DenseSystem* leaf_sys,
                                const BasisBuildOptions& opts) {
  PhaseScope phase(Phase::basis);
  const int lvl = H.leaf_level();
  const int64_t m = H.tree.num_clusters(lvl);
  SharedBasisSet bases;
  bases.init(lvl);

  const bool coupling = opts.absorb_coupling && leaf_sys && leaf_sys->has_offdiag();
  std::vector<Matrix> provisional(coupling ? m : 0);
  if (coupling) {
    if (leaf_sys->diag_lu.empty())
      throw std::logic_error("build_leaf_bases: coupling needs cached diagonal LUs");
    parallel_for(m, opts.threads, [&](int64_t p) {
      auto members = leaf_row_members(H, fills, p);
      SharedBasis b = basis_from_members(members, leaf_sys->dims[p], opts, 0);
      provisional[p] = std::move(b.Qs);
    });
  }

  parallel_for(m, opts.threads, [&](int64_t i) {
    auto row_members = leaf_row_members(H, fills, i);
    if (coupling) {
      for (int64_t p : leaf_sys->near_cols[i]) {
        if (p == i || provisional[p].cols == 0) continue;
        Matrix X = leaf_sys->diag_lu[p].solve(provisional[p]);
        row_members.push_back(matmul(leaf_sys->block(i, p), X));
      }
    }
    auto col_members = leaf_col_members(H, fills, i);
    const int64_t dim = H.cluster_range(lvl, i).size();
    SharedBasis u = basis_from_members(row_members, dim, opts, 0);
    SharedBasis v = basis_from_members(col_members, dim, opts, 0);
    // ULV needs one redundant dimension count per cluster: equalize ranks.
    const int64_t r = std::max(u.rank(), v.rank());
    if (u.rank() < r) u = basis_from_members(row_members, dim, opts, r);
    if (v.rank() < r) v = basis_from_members(col_members, dim, opts, r);
    bases.U[lvl][i] = std::move(u);
    bases.V[lvl][i] = std::move(v);
  });
  return bases;
}

SharedBasisSet build_shared_bases(const HMatrix& H, double tol, std::optional<int64_t> cap,
                                  int threads) {
  FillInSet none;
  BasisBuildOptions opts;
  opts.tol = tol;
  opts.cap = cap;
  opts.threads = threads;
  return build_leaf_bases(H, none, nullptr, opts);
}

SharedBasisSet build_shared_bases_with_fill(const HMatrix& H, const FillInSet& fills, double tol,
                                            std::optional<int64_t> cap, int threads) {
  BasisBuildOptions opts;
  opts.tol = tol;
  opts.cap = cap;
  opts.threads = threads;
  return build_leaf_bases(H, fills, nullptr, opts);
}

SkeletonSystem compute_skeletons(const HMatrix& H, const SharedBasisSet& bases, int threads) {
  PhaseScope phase(Phase::skeleton);
  const int lvl = H.leaf_level();
  const int64_t m = H.tree.num_clusters(lvl);
  SkeletonSystem out;
  std::vector<std::vector<Matrix>> near_s(m), far_s(m);
  parallel_for(m, threads, [&](int64_t i) {
    Matrix Ufull = bases.U[lvl][i].square();
    const auto& ncols = H.structure.level[lvl].near_cols[i];
    near_s[i].resize(ncols.size());
    for (size_t c = 0; c < ncols.size(); ++c) {
      const int64_t j = ncols[c];
      Matrix Vfull = bases.V[lvl][j].square();
      near_s[i][c] = matmul(matmul(Ufull, H.leaf_block(i, j), true, false), Vfull);
    }
    const auto& fcols = H.structure.level[lvl].far_cols[i];
    far_s[i].resize(fcols.size());
    for (size_t c = 0; c < fcols.size(); ++c) {
      const int64_t j = fcols[c];
      Matrix A = assemble_block(H.kernel, *H.cloud, H.cluster_range(lvl, i),
                                H.cluster_range(lvl, j));
      far_s[i][c] = matmul(matmul(bases.U[lvl][i].Qs, A, true, false), bases.V[lvl][j].Qs);
    }
  });
  for (int64_t i = 0; i < m; ++i) {
    const auto& ncols = H.structure.level[lvl].near_cols[i];
    for (size_t c = 0; c < ncols.size(); ++c) out.near_S[{i, ncols[c]}] = std::move(near_s[i][c]);
    const auto& fcols = H.structure.level[lvl].far_cols[i];
    for (size_t c = 0; c < fcols.size(); ++c) out.far_SS[{i, fcols[c]}] = std::move(far_s[i][c]);
  }
  return out;
}

BigBasisLayer make_leaf_layer(const SharedBasisSet& bases) {
  BigBasisLayer layer;
  layer.level = bases.levels;
  const auto& U = bases.U[bases.levels];
  const auto& V = bases.V[bases.levels];
  layer.Ubig.resize(U.size());
  layer.Vbig.resize(V.size());
  for (size_t i = 0; i < U.size(); ++i) {
    layer.Ubig[i] = U[i].Qs;
    layer.Vbig[i] = V[i].Qs;
  }
  return layer;
}

BigBasisLayer lift_layer(const BigBasisLayer& child, const SharedBasisSet& bases, int level) {
  if (child.level != level + 1) throw std::logic_error("lift_layer: layer level mismatch");
  BigBasisLayer layer;
  layer.level = level;
  const int64_t m = int64_t(1) << level;
  layer.Ubig.resize(m);
  layer.Vbig.resize(m);
  for (int64_t k = 0; k < m; ++k) {
    const Matrix& Tu = bases.U[level][k].Qs;
    const Matrix& Tv = bases.V[level][k].Qs;
    const Matrix& u0 = child.Ubig[2 * k];
    const Matrix& u1 = child.Ubig[2 * k + 1];
    const Matrix& v0 = child.Vbig[2 * k];
    const Matrix& v1 = child.Vbig[2 * k + 1];
    layer.Ubig[k] = vconcat(matmul(u0, Tu.block(0, 0, u0.cols, Tu.cols)),
                            matmul(u1, Tu.block(u0.cols, 0, u1.cols, Tu.cols)));
    layer.Vbig[k] = vconcat(matmul(v0, Tv.block(0, 0, v0.cols, Tv.cols)),
                            matmul(v1, Tv.block(v0.cols, 0, v1.cols, Tv.cols)));
  }
  return layer;
}

Matrix project_rows_to_merged(const HMatrix& H, const BigBasisLayer& child_layer, int lvl,
                              int64_t K, IndexRange cols) {
  const int64_t c0 = 2 * K, c1 = 2 * K + 1;
  const Matrix& u0 = child_layer.Ubig[c0];
  const Matrix& u1 = child_layer.Ubig[c1];
  IndexRange r0 = H.cluster_range(lvl + 1, c0);
  IndexRange r1 = H.cluster_range(lvl + 1, c1);
  Matrix out(u0.cols + u1.cols, cols.size());
  const int64_t panel = 512;
  for (int64_t at = cols.begin; at < cols.end; at += panel) {
    IndexRange pc{at, std::min(cols.end, at + panel)};
    Matrix A0 = assemble_block(H.kernel, *H.cloud, r0, pc);
    Matrix A1 = assemble_block(H.kernel, *H.cloud, r1, pc);
    out.set_block(0, at - cols.begin, matmul(u0, A0, true, false));
    out.set_block(u0.cols, at - cols.begin, matmul(u1, A1, true, false));
  }
  return out;
}

Matrix project_pair_to_merged(const HMatrix& H, const BigBasisLayer& child_layer, int lvl,
                              int64_t K, int64_t J) {
  IndexRange jr = H.cluster_range(lvl, J);
  Matrix P = project_rows_to_merged(H, child_layer, lvl, K, jr);
  const int64_t d0 = 2 * J, d1 = 2 * J + 1;
  const Matrix& v0 = child_layer.Vbig[d0];
  const Matrix& v1 = child_layer.Vbig[d1];
  Matrix left = P.block(0, 0, P.rows, v0.rows);
  Matrix right = P.block(0, v0.rows, P.rows, v1.rows);
  return hconcat(matmul(left, v0), matmul(right, v1));
}

namespace {

BasisUpdate absorb_fill(SharedBasis& B, const std::vector<Matrix>& products, const Matrix& fill,
                        const BasisBuildOptions& opts) {
  BasisUpdate upd;
  upd.old_rank = B.rank();
  const int64_t dim = B.dim();
  Matrix old_square = B.square();
  Matrix old_qs = B.Qs;
  std::vector<Matrix> members = products;
  members.push_back(fill);
  SharedBasis nb = basis_from_members(members, dim, opts, 0);
  upd.new_rank = nb.rank();
  upd.omega = matmul(nb.square(), old_square, true, false);
  upd.tau = matmul(nb.Qs, old_qs, true, false);
  Matrix proj = matmul(nb.Qs, matmul(nb.Qs, fill, true, false));
  Matrix resid = fill;
  resid.add_block(0, 0, proj, -1.0);
  upd.fill_residual = norm_frobenius(resid);
  B = std::move(nb);
  return upd;
}

}  // namespace

BasisUpdate absorb_fill_row_basis(SharedBasis& Ui, const std::vector<Matrix>& row_products,
                                  const Matrix& fill, const BasisBuildOptions& opts) {
  return absorb_fill(Ui, row_products, fill, opts);
}

BasisUpdate absorb_fill_col_basis(SharedBasis& Vj, const std::vector<Matrix>& col_products,
                                  const Matrix& fill, const BasisBuildOptions& opts) {
  return absorb_fill(Vj, col_products, transpose(fill), opts);
}

}  // namespace h2ulv
