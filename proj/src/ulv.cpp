#include "h2ulv/ulv.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "h2ulv/flops.hpp"
#include "h2ulv/parallel.hpp"
#include "h2ulv/prng.hpp"

namespace h2ulv {

const char* variant_name(FactorVariant v) {
  switch (v) {
    case FactorVariant::blr2: return "blr2";
    case FactorVariant::hss: return "hss";
    case FactorVariant::h2dep: return "h2dep";
    default: return "h2nodep";
  }
}

int64_t ULVFactors::n() const { return H ? H->cloud->size() : 0; }

ClusterFactors eliminate_block(Matrix& S, int64_t rdim, double pivot_tol) {
  if (S.rows != S.cols) throw std::invalid_argument("eliminate_block: S not square");
  if (rdim < 0 || rdim > S.rows) throw std::invalid_argument("eliminate_block: bad split");
  ClusterFactors f;
  f.rdim = rdim;
  f.sdim = S.rows - rdim;
  if (rdim == 0) {
    f.urs = Matrix(0, f.sdim);
    f.lsr = Matrix(f.sdim, 0);
    return f;
  }
  Matrix rr = S.block(0, 0, rdim, rdim);
  f.pivot = lu_factor(rr, pivot_tol, "S^RR");
  f.urs = S.block(0, rdim, rdim, f.sdim);
  f.pivot.solve_lower_in_place(f.urs);
  f.lsr = S.block(rdim, 0, f.sdim, rdim);
  f.pivot.solve_upper_right_in_place(f.lsr);
  if (f.sdim > 0) {
    Matrix ss = S.block(rdim, rdim, f.sdim, f.sdim);
    gemm_acc(ss, f.lsr, f.urs, -1.0);
    S.set_block(rdim, rdim, ss);
  }
  return f;
}

namespace {

struct Deposit {
  int target_level = 0;
  int64_t row = 0, col = 0;  // covering far pair at target_level
  int src_level = 0;
  int64_t src_row = 0, src_col = 0;
  Matrix content;  // source-level skeleton coordinates
};

// Chain matrix mapping a cluster's skeleton coordinates at src_level into its
// ancestor's skeleton coordinates at dst_level via the transfer matrices.
Matrix skeleton_chain(const SharedBasisSet& bases, bool row_side, int src_level, int64_t cluster,
                      int dst_level) {
  const auto& B = row_side ? bases.U : bases.V;
  Matrix C = Matrix::identity(B[src_level][cluster].rank());
  int64_t cl = cluster;
  for (int lvl = src_level; lvl > dst_level; --lvl) {
    const int64_t parent = cl >> 1;
    const Matrix& Qs = B[lvl - 1][parent].Qs;
    const int64_t left_rank = B[lvl][2 * parent].rank();
    const int64_t off = (cl & 1) ? left_rank : 0;
    Matrix sub = Qs.block(off, 0, C.rows, Qs.cols);
    C = matmul(sub, C, true, false);
    cl = parent;
  }
  return C;
}

// ---------------------------------------------------------------------------

struct DriverBase {
  const HMatrix& H;
  const FactorOptions& opts;
  ULVFactors out;
  BigBasisLayer layer;  // child layer of the level currently processed
  std::vector<Deposit> deposits;

  DriverBase(const HMatrix& Hm, const FactorOptions& o) : H(Hm), opts(o) {}

  const BlockStructure& bs() const { return H.structure; }
  int leaf() const { return H.tree.levels; }
  bool is_blr2() const { return H.variant == StructureVariant::blr2; }

  BasisBuildOptions basis_opts() const {
    BasisBuildOptions b;
    b.tol = opts.tol;
    b.cap = opts.cap;
    b.threads = opts.threads;
    return b;
  }

  // Find the covering far pair of an inactive pair and record a deposit.
  void push_deposit(int lvl, int64_t i, int64_t j, Matrix&& C) {
    int64_t a = i, b = j;
    int tl = lvl;
    while (tl > 1) {
      a >>= 1;
      b >>= 1;
      --tl;
      if (bs().is_far(tl, a, b)) break;
      if (bs().is_near(tl, a, b)) throw std::logic_error("push_deposit: covering pair is dense");
    }
    deposits.push_back({tl, a, b, lvl, i, j, std::move(C)});
  }

  void apply_deposits_far(int lvl, int64_t P, int64_t Q, Matrix& SS) {
    for (const auto& d : deposits) {
      if (d.target_level != lvl || d.row != P || d.col != Q) continue;
      Matrix Cu = skeleton_chain(out.bases, true, d.src_level, d.src_row, lvl);
      Matrix Cv = skeleton_chain(out.bases, false, d.src_level, d.src_col, lvl);
      SS.add_block(0, 0, matmul(matmul(Cu, d.content), Cv, false, true), 1.0);
    }
  }

  // Deposit into an unsplit merged block at the cutoff level.
  void apply_deposits_merged(int lvl, int64_t P, int64_t Q, Matrix& W) {
    for (const auto& d : deposits) {
      if (d.target_level != lvl || d.row != P || d.col != Q) continue;
      Matrix Cu = skeleton_chain(out.bases, true, d.src_level, d.src_row, lvl + 1);
      Matrix Cv = skeleton_chain(out.bases, false, d.src_level, d.src_col, lvl + 1);
      Matrix piece = matmul(matmul(Cu, d.content), Cv, false, true);
      const int64_t ci = d.src_row >> (d.src_level - (lvl + 1));
      const int64_t cj = d.src_col >> (d.src_level - (lvl + 1));
      const int64_t roff = (ci & 1) ? out.bases.U[lvl + 1][ci - 1].rank() : 0;
      const int64_t coff = (cj & 1) ? out.bases.V[lvl + 1][cj - 1].rank() : 0;
      W.add_block(roff, coff, piece, 1.0);
    }
  }

  void observe_fill(int lvl, int64_t c, int64_t j, double norm_f, double resid,
                    double* level_max) {
    if (norm_f > 0.0 && level_max) *level_max = std::max(*level_max, resid / norm_f);
    if (opts.fill_observer) opts.fill_observer({lvl, c, j, norm_f, resid});
    if (resid > opts.abort_residual_factor * opts.tol * norm_f && norm_f > 1e-300)
      throw std::runtime_error("basis does not absorb fill-in at level " + std::to_string(lvl) +
                               " block (" + std::to_string(c) + "," + std::to_string(j) + ")");
  }

  // Doubly projected far content of one level through the child layer.
  std::map<PairKey, Matrix> compute_wcache(int lvl) {
    PhaseScope sk(Phase::skeleton);
    std::map<PairKey, Matrix> wcache;
    std::vector<PairKey> pairs;
    for (int64_t k = 0; k < (int64_t(1) << lvl); ++k)
      for (int64_t j : bs().level[lvl].far_cols[k]) pairs.push_back({k, j});
    std::vector<Matrix> store(pairs.size());
    parallel_for(static_cast<int64_t>(pairs.size()), opts.threads, [&](int64_t t) {
      store[t] = project_pair_to_merged(H, layer, lvl, pairs[t].first, pairs[t].second);
    });
    for (size_t t = 0; t < pairs.size(); ++t) wcache[pairs[t]] = std::move(store[t]);
    return wcache;
  }

  // Transfer bases at an upper level. Members: merged off-diagonal fills,
  // projected far blocks of this level, raw restrictions of coarser far
  // blocks, and (optionally) the dense-neighbor coupling products.
  void build_transfers(int lvl, DenseSystem& sys, const FillInSet& fills,
                       const std::map<PairKey, Matrix>& wcache, bool coupling_enabled) {
    PhaseScope phase(Phase::basis);
    const int64_t m = sys.m();

    auto row_members = [&](int64_t k, const std::vector<Matrix>* prov) {
      std::vector<Matrix> mem;
      for (const auto& [key, F] : fills.fills)
        if (key.first == k && key.second != k) mem.push_back(F);
      for (int64_t j : bs().level[lvl].far_cols[k]) mem.push_back(wcache.at({k, j}));
      for (auto [l2, J] : ancestor_far_partners(bs(), lvl, k))
        mem.push_back(project_rows_to_merged(H, layer, lvl, k, H.cluster_range(l2, J)));
      if (prov) {
        for (int64_t p : sys.near_cols[k]) {
          if (p == k || (*prov)[p].cols == 0) continue;
          Matrix X = sys.diag_lu[p].solve((*prov)[p]);
          mem.push_back(matmul(sys.block(k, p), X));
        }
      }
      return mem;
    };
    auto col_members = [&](int64_t k) {
      std::vector<Matrix> mem;
      for (const auto& [key, F] : fills.fills)
        if (key.second == k && key.first != k) mem.push_back(transpose(F));
      for (int64_t i : bs().level[lvl].far_cols[k]) mem.push_back(transpose(wcache.at({i, k})));
      for (auto [l2, I] : ancestor_far_partners(bs(), lvl, k)) {
        IndexRange rows = H.cluster_range(l2, I);
        const int64_t c0 = 2 * k, c1 = 2 * k + 1;
        Matrix A0 = assemble_block(H.kernel, *H.cloud, rows, H.cluster_range(lvl + 1, c0));
        Matrix A1 = assemble_block(H.kernel, *H.cloud, rows, H.cluster_range(lvl + 1, c1));
        mem.push_back(transpose(hconcat(matmul(A0, layer.Vbig[c0]), matmul(A1, layer.Vbig[c1]))));
      }
      return mem;
    };

    const bool coupling = coupling_enabled && sys.has_offdiag() && !sys.diag_lu.empty();
    std::vector<Matrix> provisional(coupling ? m : 0);
    if (coupling) {
      parallel_for(m, opts.threads, [&](int64_t p) {
        auto mem = row_members(p, nullptr);
        SharedBasis b = basis_from_members(mem, sys.dims[p], basis_opts(), 0);
        provisional[p] = std::move(b.Qs);
      });
    }
    parallel_for(m, opts.threads, [&](int64_t k) {
      auto rm = row_members(k, coupling ? &provisional : nullptr);
      auto cm = col_members(k);
      SharedBasis u = basis_from_members(rm, sys.dims[k], basis_opts(), 0);
      SharedBasis v = basis_from_members(cm, sys.dims[k], basis_opts(), 0);
      const int64_t r = std::max(u.rank(), v.rank());
      if (u.rank() < r) u = basis_from_members(rm, sys.dims[k], basis_opts(), r);
      if (v.rank() < r) v = basis_from_members(cm, sys.dims[k], basis_opts(), r);
      if (sys.dims[k] == 0) {
        for (const auto& M : rm)
          if (norm_frobenius(M) > 0)
            throw std::runtime_error(
                "compute_transfer: rank-0 children with nonzero parent blocks");
      }
      out.bases.U[lvl][k] = std::move(u);
      out.bases.V[lvl][k] = std::move(v);
    });
  }

  Matrix far_base_content(int lvl, int64_t k, int64_t j,
                          const std::map<PairKey, Matrix>& wcache) {
    PhaseScope sk(Phase::skeleton);
    const auto& U = out.bases.U[lvl];
    const auto& V = out.bases.V[lvl];
    if (lvl == leaf()) {
      Matrix A =
          assemble_block(H.kernel, *H.cloud, H.cluster_range(lvl, k), H.cluster_range(lvl, j));
      return matmul(matmul(U[k].Qs, A, true, false), V[j].Qs);
    }
    return matmul(matmul(U[k].Qs, wcache.at({k, j}), true, false), V[j].Qs);
  }

  void assemble_top(int lvl, DenseSystem&& sys) {
    PhaseScope phase(Phase::factorize);
    const int64_t m = sys.m();
    out.cutoff_level = lvl;
    out.cutoff_dims = sys.dims;
    std::vector<int64_t> off(m + 1, 0);
    for (int64_t k = 0; k < m; ++k) off[k + 1] = off[k] + sys.dims[k];
    Matrix A(off[m], off[m]);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j : sys.near_cols[i]) A.set_block(off[i], off[j], sys.block(i, j));
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j : bs().level[lvl].far_cols[i]) {
        Matrix W;
        {
          PhaseScope sk(Phase::skeleton);
          W = project_pair_to_merged(H, layer, lvl, i, j);
        }
        apply_deposits_merged(lvl, i, j, W);
        A.set_block(off[i], off[j], W);
      }
    }
    out.top = lu_factor(A, 1e-15, "top system");
  }

  LevelFactors start_level_factors(int lvl, const DenseSystem& sys) {
    LevelFactors lf;
    lf.level = lvl;
    lf.dims = sys.dims;
    return lf;
  }

  void finish_level_ranks(LevelFactors& lf) {
    lf.ranks.resize(lf.dims.size());
    for (size_t k = 0; k < lf.dims.size(); ++k)
      lf.ranks[k] = out.bases.rank(lf.level, static_cast<int64_t>(k));
  }
};

// ---------------------------------------------------------------------------
// Level-parallel driver: blr2, hss and the dependency-free h2 variant.
//
// Far-field content flows upward as per-cluster "content pieces": the
// projected block row of a cluster toward each far target of the cluster or
// one of its ancestors, with the first-order row-combination corrections
// (fills and dense-neighbor couplings) already applied. The pieces double as
// transfer-basis members and as the skeleton matrix sources, so every level
// eliminates a system whose off-diagonal content is representable in the
// fixed bases.

struct NodepDriver : DriverBase {
  using DriverBase::DriverBase;

  // (target_level, target_cluster) -> piece, per row cluster.
  using TargetKey = std::pair<int, int64_t>;
  using PieceMap = std::map<TargetKey, Matrix>;

  struct LevelWork {
    int lvl = 0;
    DenseSystem sys;
    FillInSet fills;
    std::map<PairKey, Matrix> far_ss;    // skeleton matrices of this level's far pairs
    std::map<PairKey, Matrix> dense_ss;  // Schur fill content at off-diagonal near pairs
    std::vector<Matrix> diag_S;
    std::vector<PieceMap> pieces;  // corrected content, current row coords x raw cols
  };

  std::vector<PieceMap> carried_;  // projected pieces of the previous level

  std::vector<TargetKey> targets_of(int lvl, int64_t k) const {
    std::vector<TargetKey> t;
    for (int64_t j : bs().level[lvl].far_cols[k]) t.push_back({lvl, j});
    for (auto [l2, J] : ancestor_far_partners(bs(), lvl, k)) t.push_back({l2, J});
    return t;
  }

  // Covering far target of an inactive pair (i, j) at this level.
  TargetKey covering_target(int lvl, int64_t i, int64_t j) const {
    int64_t a = i, b = j;
    int tl = lvl;
    while (tl > 1) {
      a >>= 1;
      b >>= 1;
      --tl;
      if (bs().is_far(tl, a, b)) return {tl, b};
      if (bs().is_near(tl, a, b))
        throw std::logic_error("covering_target: covering pair is dense");
    }
    throw std::logic_error("covering_target: no covering far block");
  }

  // Leaf content pieces: Us_c^T [A(c,J) - sum_p Z_cp A(p,J)] plus the fill
  // blocks of row c sliced into their covering targets.
  void build_leaf_pieces(LevelWork& w, double* level_max_resid) {
    PhaseScope phase(Phase::skeleton);
    const int lvl = w.lvl;
    const int64_t m = w.sys.m();
    const auto& U = out.bases.U[lvl];
    const auto& V = out.bases.V[lvl];
    w.pieces.assign(m, {});
    const bool offdiag = w.sys.has_offdiag();

    parallel_for(m, opts.threads, [&](int64_t c) {
      // q_cp = Us_c^T M_cp M_pp^-1 for every dense neighbor.
      std::map<int64_t, Matrix> q;
      if (offdiag && U[c].rank() > 0) {
        for (int64_t p : w.sys.near_cols[c]) {
          if (p == c) continue;
          Matrix B = matmul(w.sys.block(c, p), U[c].Qs, true, false);
          w.sys.diag_lu[p].solve_transpose_in_place(B);
          q[p] = transpose(B);
        }
      }
      for (const TargetKey& tk : targets_of(lvl, c)) {
        IndexRange jr = H.cluster_range(tk.first, tk.second);
        Matrix A = assemble_block(H.kernel, *H.cloud, H.cluster_range(lvl, c), jr);
        Matrix piece = matmul(U[c].Qs, A, true, false);
        for (auto& [p, qcp] : q) {
          Matrix Ap = assemble_block(H.kernel, *H.cloud, H.cluster_range(lvl, p), jr);
          // Dense (p, j) paths within the target are the precomputed fills;
          // zero those columns so they are not counted twice.
          bool all_zero = false;
          for (int64_t jn : w.sys.near_cols[p]) {
            IndexRange jnr = H.cluster_range(lvl, jn);
            if (jnr.begin >= jr.begin && jnr.end <= jr.end) {
              for (int64_t col = jnr.begin; col < jnr.end; ++col)
                for (int64_t row = 0; row < Ap.rows; ++row) Ap(row, col - jr.begin) = 0.0;
              if (jnr.begin == jr.begin && jnr.end == jr.end) all_zero = true;
            }
          }
          if (!all_zero) gemm_acc(piece, qcp, Ap, -1.0);
        }
        w.pieces[c][tk] = std::move(piece);
      }
    });

    // Fill content: project, measure absorption, add into the target piece.
    for (const auto& [key, F] : w.fills.fills) {
      auto [c, j] = key;
      if (c == j) continue;
      Matrix uf = matmul(U[c].Qs, F, true, false);
      {
        Matrix proj = matmul(uf, V[j].Qs);
        const double nf = norm_frobenius(F);
        const double kept = norm_frobenius(proj);
        observe_fill(lvl, c, j, nf, std::sqrt(std::max(0.0, nf * nf - kept * kept)),
                     level_max_resid);
      }
      if (bs().is_far(lvl, c, j)) {
        w.pieces[c].at({lvl, j}).add_block(0, 0, uf, 1.0);
      } else if (!bs().is_near(lvl, c, j)) {
        TargetKey tk = covering_target(lvl, c, j);
        IndexRange jr = H.cluster_range(lvl, j);
        IndexRange Jr = H.cluster_range(tk.first, tk.second);
        w.pieces[c].at(tk).add_block(0, jr.begin - Jr.begin, uf, 1.0);
      }
      // Fills at dense positions enter through dense_ss below.
    }
  }

  // Upper-level pieces in merged coordinates, corrected by the merged-level
  // row combination; built before the transfers so they can serve as members.
  void build_upper_pieces(LevelWork& w, std::vector<PieceMap>& merged) {
    PhaseScope phase(Phase::skeleton);
    const int lvl = w.lvl;
    const int64_t m = w.sys.m();
    merged.assign(m, {});
    // Stack the children pieces.
    parallel_for(m, opts.threads, [&](int64_t K) {
      for (const TargetKey& tk : targets_of(lvl, K)) {
        auto i0 = carried_[2 * K].find(tk);
        auto i1 = carried_[2 * K + 1].find(tk);
        if (i0 == carried_[2 * K].end() || i1 == carried_[2 * K + 1].end())
          throw std::logic_error("build_upper_pieces: missing child piece");
        merged[K][tk] = vconcat(i0->second, i1->second);
      }
    });
    // Row combination: subtract Z'_KP times the neighbor stacks. Columns of
    // clusters dense-coupled to P stay out (those paths are the fills).
    if (w.sys.has_offdiag()) {
      std::vector<PieceMap> corrected = merged;
      parallel_for(m, opts.threads, [&](int64_t K) {
        for (int64_t P : w.sys.near_cols[K]) {
          if (P == K) continue;
          for (auto& [tk, piece] : corrected[K]) {
            auto it = merged[P].find(tk);
            if (it == merged[P].end()) continue;  // target not shared; skip
            IndexRange jr = H.cluster_range(tk.first, tk.second);
            Matrix src = it->second;
            bool all_zero = false;
            for (int64_t jn : w.sys.near_cols[P]) {
              IndexRange jnr = H.cluster_range(lvl, jn);
              if (jnr.begin >= jr.begin && jnr.end <= jr.end) {
                for (int64_t col = jnr.begin; col < jnr.end; ++col)
                  for (int64_t row = 0; row < src.rows; ++row) src(row, col - jr.begin) = 0.0;
                if (jnr.begin == jr.begin && jnr.end == jr.end) all_zero = true;
              }
            }
            if (all_zero) continue;
            Matrix g = w.sys.diag_lu[P].solve(src);
            gemm_acc(piece, w.sys.block(K, P), g, -1.0);
          }
        }
      });
      merged = std::move(corrected);
    }
    // Covered fills of this level: expand the merged columns to raw columns
    // and add into the covering target slice.
    for (const auto& [key, F] : w.fills.fills) {
      auto [c, j] = key;
      if (c == j || bs().is_far(lvl, c, j) || bs().is_near(lvl, c, j)) continue;
      TargetKey tk = covering_target(lvl, c, j);
      IndexRange jr = H.cluster_range(lvl, j);
      IndexRange Jr = H.cluster_range(tk.first, tk.second);
      const Matrix& v0 = layer.Vbig[2 * j];
      const Matrix& v1 = layer.Vbig[2 * j + 1];
      Matrix left = F.block(0, 0, F.rows, v0.cols);
      Matrix right = F.block(0, v0.cols, F.rows, v1.cols);
      Matrix raw = hconcat(matmul(left, v0, false, true), matmul(right, v1, false, true));
      merged[c].at(tk).add_block(0, jr.begin - Jr.begin, raw, 1.0);
    }
  }

  // Project a merged-coordinate piece onto a same-level far target's merged
  // column space (the stacked child Vbig of the target).
  Matrix cols_to_merged(const Matrix& piece, int64_t J) const {
    const Matrix& v0 = layer.Vbig[2 * J];
    const Matrix& v1 = layer.Vbig[2 * J + 1];
    Matrix left = piece.block(0, 0, piece.rows, v0.rows);
    Matrix right = piece.block(0, v0.rows, piece.rows, v1.rows);
    return hconcat(matmul(left, v0), matmul(right, v1));
  }

  void build_transfers_nodep(LevelWork& w, const std::vector<PieceMap>& merged) {
    PhaseScope phase(Phase::basis);
    const int lvl = w.lvl;
    const int64_t m = w.sys.m();
    auto row_members = [&](int64_t k) {
      std::vector<Matrix> mem;
      for (const auto& [key, F] : w.fills.fills)
        if (key.first == k && key.second != k) mem.push_back(F);
      for (const auto& [tk, piece] : merged[k]) mem.push_back(piece);
      return mem;
    };
    auto col_members = [&](int64_t k) {
      std::vector<Matrix> mem;
      for (const auto& [key, F] : w.fills.fills)
        if (key.second == k && key.first != k) mem.push_back(transpose(F));
      // Row spaces of the incoming far content: the partners' pieces toward
      // k, column-projected onto k's merged coordinates.
      for (int64_t i : bs().level[lvl].far_cols[k])
        mem.push_back(transpose(cols_to_merged(merged[i].at({lvl, k}), k)));
      for (auto [l2, I] : ancestor_far_partners(bs(), lvl, k)) {
        IndexRange rows = H.cluster_range(l2, I);
        const int64_t c0 = 2 * k, c1 = 2 * k + 1;
        Matrix A0 = assemble_block(H.kernel, *H.cloud, rows, H.cluster_range(lvl + 1, c0));
        Matrix A1 = assemble_block(H.kernel, *H.cloud, rows, H.cluster_range(lvl + 1, c1));
        mem.push_back(transpose(hconcat(matmul(A0, layer.Vbig[c0]), matmul(A1, layer.Vbig[c1]))));
      }
      return mem;
    };
    parallel_for(m, opts.threads, [&](int64_t k) {
      auto rm = row_members(k);
      auto cm = col_members(k);
      SharedBasis u = basis_from_members(rm, w.sys.dims[k], basis_opts(), 0);
      SharedBasis v = basis_from_members(cm, w.sys.dims[k], basis_opts(), 0);
      const int64_t r = std::max(u.rank(), v.rank());
      if (u.rank() < r) u = basis_from_members(rm, w.sys.dims[k], basis_opts(), r);
      if (v.rank() < r) v = basis_from_members(cm, w.sys.dims[k], basis_opts(), r);
      if (w.sys.dims[k] == 0) {
        for (const auto& M : rm)
          if (norm_frobenius(M) > 0)
            throw std::runtime_error(
                "compute_transfer: rank-0 children with nonzero parent blocks");
      }
      out.bases.U[lvl][k] = std::move(u);
      out.bases.V[lvl][k] = std::move(v);
    });
  }

  // Skeleton content at one level: the diagonal with its fill, the far
  // blocks from the corrected pieces, and the pure fill content at the
  // off-diagonal near pairs.
  void assemble_level(LevelWork& w, const std::vector<PieceMap>& merged,
                      double* level_max_resid) {
    const int lvl = w.lvl;
    const bool is_leaf = (lvl == leaf());
    const int64_t m = w.sys.m();
    const auto& U = out.bases.U[lvl];
    const auto& V = out.bases.V[lvl];
    PhaseScope phase(Phase::factorize);

    // Diagonal skeletons with the diagonal fill added before factorization.
    w.diag_S.resize(m);
    parallel_for(m, opts.threads, [&](int64_t k) {
      Matrix D = w.sys.block(k, k);
      if (const Matrix* F = w.fills.find(k, k)) D.add_block(0, 0, *F, 1.0);
      w.diag_S[k] = matmul(matmul(U[k].square(), D, true, false), V[k].square());
    });

    // Far skeletons from the pieces.
    {
      std::vector<std::vector<std::pair<int64_t, Matrix>>> rows(m);
      parallel_for(m, opts.threads, [&](int64_t k) {
        for (int64_t j : bs().level[lvl].far_cols[k]) {
          if (is_leaf) {
            rows[k].push_back({j, matmul(w.pieces[k].at({lvl, j}), V[j].Qs)});
          } else {
            Matrix y = cols_to_merged(merged[k].at({lvl, j}), j);
            rows[k].push_back({j, matmul(matmul(U[k].Qs, y, true, false), V[j].Qs)});
          }
        }
      });
      for (int64_t k = 0; k < m; ++k)
        for (auto& [j, S] : rows[k]) w.far_ss[{k, j}] = std::move(S);
    }

    // Off-diagonal near content: fills plus the coupling terms through the
    // far blocks; the original dense content was eliminated by the row
    // combination.
    if (w.sys.has_offdiag()) {
      std::vector<std::vector<std::pair<int64_t, Matrix>>> rows(m);
      parallel_for(m, opts.threads, [&](int64_t k) {
        for (int64_t j : w.sys.near_cols[k]) {
          if (j == k) continue;
          Matrix D(U[k].rank(), V[j].rank());
          bool any = false;
          if (const Matrix* F = w.fills.find(k, j)) {
            Matrix uf = matmul(U[k].Qs, *F, true, false);
            {
              Matrix proj = matmul(uf, V[j].Qs);
              const double nf = norm_frobenius(*F);
              const double kept = norm_frobenius(proj);
              observe_fill(lvl, k, j, nf,
                           std::sqrt(std::max(0.0, nf * nf - kept * kept)), level_max_resid);
              D.add_block(0, 0, proj, 1.0);
            }
            any = true;
          }
          // T terms: -Us_k^T Z_kp A(p, j) Vs_j over far (p, j).
          for (int64_t p : w.sys.near_cols[k]) {
            if (p == k || p == j || !bs().is_far(lvl, p, j)) continue;
            Matrix content;
            if (is_leaf) {
              content = assemble_block(H.kernel, *H.cloud, H.cluster_range(lvl, p),
                                       H.cluster_range(lvl, j));
            } else {
              content = cols_to_merged(
                  vconcat(carried_[2 * p].at({lvl, j}), carried_[2 * p + 1].at({lvl, j})), j);
            }
            Matrix g = w.sys.diag_lu[p].solve(is_leaf ? content : content);
            Matrix t = matmul(U[k].Qs, matmul(w.sys.block(k, p), g), true, false);
            if (is_leaf)
              D.add_block(0, 0, matmul(t, V[j].Qs), -1.0);
            else
              D.add_block(0, 0, matmul(t, V[j].Qs), -1.0);
            any = true;
          }
          if (any) rows[k].push_back({j, std::move(D)});
        }
      });
      for (int64_t k = 0; k < m; ++k)
        for (auto& [j, S] : rows[k]) w.dense_ss[{k, j}] = std::move(S);
    }
  }

  void eliminate_level(LevelWork& w, LevelFactors& lf) {
    PhaseScope phase(Phase::factorize);
    const int64_t m = w.sys.m();
    lf.elim.resize(m);
    if (opts.keep_diag_skeletons) lf.diag_pre = w.diag_S;
    auto task = [&](int64_t k) {
      const int64_t rank = out.bases.U[w.lvl][k].rank();
      lf.elim[k] = eliminate_block(w.diag_S[k], w.sys.dims[k] - rank, opts.rr_pivot_tol);
    };
    if (opts.task_order_seed) {
      std::vector<int64_t> order(m);
      for (int64_t i = 0; i < m; ++i) order[i] = i;
      SplitMix64 rng(*opts.task_order_seed ^ (0x9e37ull * w.lvl));
      for (int64_t i = m - 1; i > 0; --i) {
        int64_t j = static_cast<int64_t>(rng.next_u64() % (i + 1));
        std::swap(order[i], order[j]);
      }
      for (int64_t i = 0; i < m; ++i) task(order[i]);
    } else {
      parallel_for(m, opts.threads, task);
    }
  }

  DenseSystem merge(const LevelWork& w) {
    PhaseScope phase(Phase::factorize);
    const int lvl = w.lvl;
    const int64_t mp = int64_t(1) << (lvl - 1);
    DenseSystem next;
    next.dims.resize(mp);
    for (int64_t I = 0; I < mp; ++I)
      next.dims[I] = out.bases.rank(lvl, 2 * I) + out.bases.rank(lvl, 2 * I + 1);
    next.near_cols = bs().level[lvl - 1].near_cols;

    auto child_ss = [&](int64_t ci, int64_t cj) -> const Matrix* {
      auto it = w.far_ss.find({ci, cj});
      if (it != w.far_ss.end()) return &it->second;
      auto it2 = w.dense_ss.find({ci, cj});
      if (it2 != w.dense_ss.end()) return &it2->second;
      return nullptr;
    };

    for (int64_t I = 0; I < mp; ++I) {
      for (int64_t J : next.near_cols[I]) {
        Matrix B(next.dims[I], next.dims[J]);
        for (int64_t a = 0; a < 2; ++a)
          for (int64_t b = 0; b < 2; ++b) {
            const int64_t ci = 2 * I + a, cj = 2 * J + b;
            const int64_t r0 = a == 0 ? 0 : out.bases.rank(lvl, 2 * I);
            const int64_t c0 = b == 0 ? 0 : out.bases.rank(lvl, 2 * J);
            if (ci == cj) {
              const Matrix& f = w.diag_S[ci];
              const int64_t rank = out.bases.rank(lvl, ci);
              const int64_t rd = f.rows - rank;
              if (rank > 0) B.set_block(r0, c0, f.block(rd, rd, rank, rank));
            } else if (const Matrix* piece = child_ss(ci, cj)) {
              B.set_block(r0, c0, *piece);
            }
          }
        next.put(I, J, std::move(B));
      }
    }
    return next;
  }

  // Project the corrected pieces into this level's skeleton coordinates so
  // the parent level can stack them.
  void project_pieces(LevelWork& w, std::vector<PieceMap>& merged) {
    PhaseScope phase(Phase::skeleton);
    const int lvl = w.lvl;
    const bool is_leaf = (lvl == leaf());
    const int64_t m = w.sys.m();
    std::vector<PieceMap> next(m);
    parallel_for(m, opts.threads, [&](int64_t k) {
      const auto& src = is_leaf ? w.pieces[k] : merged[k];
      for (const auto& [tk, piece] : src) {
        if (tk.first == lvl) continue;  // consumed at this level
        next[k][tk] = is_leaf ? piece : matmul(out.bases.U[lvl][k].Qs, piece, true, false);
      }
    });
    carried_ = std::move(next);
  }

  void assemble_top_nodep(int lvl, DenseSystem&& sys) {
    PhaseScope phase(Phase::factorize);
    const int64_t m = sys.m();
    out.cutoff_level = lvl;
    out.cutoff_dims = sys.dims;
    std::vector<int64_t> off(m + 1, 0);
    for (int64_t k = 0; k < m; ++k) off[k + 1] = off[k] + sys.dims[k];
    Matrix A(off[m], off[m]);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j : sys.near_cols[i]) A.set_block(off[i], off[j], sys.block(i, j));
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j : bs().level[lvl].far_cols[i]) {
        Matrix piece = vconcat(carried_[2 * i].at({lvl, j}), carried_[2 * i + 1].at({lvl, j}));
        A.set_block(off[i], off[j], cols_to_merged(piece, j));
      }
    }
    out.top = lu_factor(A, 1e-15, "top system");
  }

  void run(FactorInputs&& inputs) {
    out.variant = opts.variant;
    out.H = &H;
    out.bases = std::move(inputs.bases);
    if (out.bases.levels == 0) out.bases.init(leaf());

    LevelWork w;
    w.lvl = leaf();
    w.sys = std::move(inputs.leaf_sys);
    w.fills = std::move(inputs.leaf_fills);

    while (true) {
      const bool is_leaf = (w.lvl == leaf());
      std::vector<PieceMap> merged;
      out.max_fill_residual_rel.push_back(0.0);
      if (is_leaf) {
        build_leaf_pieces(w, &out.max_fill_residual_rel.back());
      } else {
        w.fills = precompute_fillins(w.sys, opts.rr_pivot_tol, opts.threads);
        build_upper_pieces(w, merged);
        build_transfers_nodep(w, merged);
      }
      assemble_level(w, merged, &out.max_fill_residual_rel.back());

      LevelFactors lf = start_level_factors(w.lvl, w.sys);
      finish_level_ranks(lf);
      eliminate_level(w, lf);
      lf.use_z = w.sys.has_offdiag();

      project_pieces(w, merged);
      layer = is_leaf ? make_leaf_layer(out.bases) : lift_layer(layer, out.bases, w.lvl);
      lf.sys = std::move(w.sys);

      if (is_blr2()) {
        finish_blr2(w, std::move(lf));
        break;
      }

      DenseSystem next = merge(w);
      out.levels.push_back(std::move(lf));

      const int next_lvl = w.lvl - 1;
      if (next_lvl <= 1 || next.total_dim() <= 4 * H.tree.leaf_size_target) {
        assemble_top_nodep(next_lvl, std::move(next));
        break;
      }
      w = LevelWork{};
      w.lvl = next_lvl;
      w.sys = std::move(next);
    }
  }

  // Flat variant: the remaining skeleton grid is factorized as one matrix.
  void finish_blr2(LevelWork& w, LevelFactors&& lf) {
    PhaseScope phase(Phase::factorize);
    const int64_t m = lf.dims.size();
    std::vector<int64_t> off(m + 1, 0);
    for (int64_t k = 0; k < m; ++k) off[k + 1] = off[k] + lf.ranks[k];
    Matrix A(off[m], off[m]);
    for (int64_t k = 0; k < m; ++k) {
      const Matrix& f = w.diag_S[k];
      const int64_t rd = f.rows - lf.ranks[k];
      if (lf.ranks[k] > 0) A.set_block(off[k], off[k], f.block(rd, rd, lf.ranks[k], lf.ranks[k]));
    }
    for (auto& [key, SS] : w.far_ss) A.set_block(off[key.first], off[key.second], SS);
    for (auto& [key, SS] : w.dense_ss) A.set_block(off[key.first], off[key.second], SS);
    out.cutoff_level = w.lvl;
    out.cutoff_dims.resize(m);
    for (int64_t k = 0; k < m; ++k) out.cutoff_dims[k] = lf.ranks[k];
    out.levels.push_back(std::move(lf));
    out.top = lu_factor(A, 1e-15, "top system");
  }
};

// ---------------------------------------------------------------------------
// Sequential driver with recompression (h2dep).

struct DepDriver : DriverBase {
  using DriverBase::DriverBase;

  struct State {
    int lvl = 0;
    DenseSystem sys;
    std::vector<Matrix> diag_S;
    std::map<PairKey, Matrix> nearS;
    std::map<PairKey, Matrix> farSS;
  };

  int64_t rank_of(int lvl, int64_t k) const { return out.bases.rank(lvl, k); }

  // Re-express all skeleton state touching cluster `i` after a row-basis
  // change, and record the op for the solver replay.
  void apply_row_update(State& st, DepLevel& log, int64_t i, const BasisUpdate& upd) {
    log.ops.push_back(DepBasisOp{i, true, upd.omega});
    st.diag_S[i] = matmul(upd.omega, st.diag_S[i]);
    for (auto& [key, S] : st.nearS)
      if (key.first == i) S = matmul(upd.omega, S);
    for (auto& [key, S] : st.farSS)
      if (key.first == i) S = matmul(upd.tau, S);
  }

  void apply_col_update(State& st, DepLevel& log, int64_t j, const BasisUpdate& upd) {
    log.ops.push_back(DepBasisOp{j, false, upd.omega});
    st.diag_S[j] = matmul(st.diag_S[j], upd.omega, false, true);
    for (auto& [key, S] : st.nearS)
      if (key.second == j) S = matmul(S, upd.omega, false, true);
    for (auto& [key, S] : st.farSS)
      if (key.second == j) S = matmul(S, upd.tau, false, true);
  }

  std::vector<Matrix> row_products(const State& st, int64_t i) {
    std::vector<Matrix> prods;
    for (const auto& [key, S] : st.farSS)
      if (key.first == i) prods.push_back(matmul(out.bases.U[st.lvl][i].Qs, S));
    return prods;
  }
  std::vector<Matrix> col_products(const State& st, int64_t j) {
    std::vector<Matrix> prods;
    for (const auto& [key, S] : st.farSS)
      if (key.second == j) prods.push_back(matmul(out.bases.V[st.lvl][j].Qs, S, false, true));
    return prods;
  }

  // Absorb a block-coordinate fill at (i, j); only the sides whose redundant
  // coordinates are touched get a basis update.
  void absorb_fill(State& st, DepLevel& log, int64_t i, int64_t j, const Matrix& F,
                   bool row_touch, bool col_touch, double* level_max) {
    if (row_touch) {
      BasisUpdate upd =
          absorb_fill_row_basis(out.bases.U[st.lvl][i], row_products(st, i), F, basis_opts());
      apply_row_update(st, log, i, upd);
    }
    if (col_touch) {
      BasisUpdate upd =
          absorb_fill_col_basis(out.bases.V[st.lvl][j], col_products(st, j), F, basis_opts());
      apply_col_update(st, log, j, upd);
    }
    const Matrix& Us = out.bases.U[st.lvl][i].Qs;
    const Matrix& Vs = out.bases.V[st.lvl][j].Qs;
    Matrix proj = matmul(matmul(Us, F, true, false), Vs);
    const double nf = norm_frobenius(F);
    const double kept = norm_frobenius(proj);
    observe_fill(st.lvl, i, j, nf, std::sqrt(std::max(0.0, nf * nf - kept * kept)), level_max);
    if (bs().is_far(st.lvl, i, j)) {
      auto it = st.farSS.find({i, j});
      if (it == st.farSS.end())
        st.farSS.emplace(PairKey{i, j}, std::move(proj));
      else
        it->second.add_block(0, 0, proj, 1.0);
    } else {
      push_deposit(st.lvl, i, j, std::move(proj));
    }
  }

  void eliminate_sequential(State& st, DepLevel& log, LevelFactors& lf, double* level_max) {
    PhaseScope phase(Phase::factorize);
    const int64_t m = st.sys.m();
    const int lvl = st.lvl;
    std::vector<int64_t> rank_elim(m, -1);
    lf.elim.resize(m);
    if (opts.keep_diag_skeletons) lf.diag_pre = st.diag_S;

    for (int64_t k = 0; k < m; ++k) {
      const int64_t rank = rank_of(lvl, k);
      const int64_t dim = st.sys.dims[k];
      const int64_t rdim = dim - rank;
      rank_elim[k] = rank;

      DepElimOp op;
      op.k = k;
      op.rdim = rdim;
      op.sdim = rank;
      ClusterFactors cf = eliminate_block(st.diag_S[k], rdim, opts.rr_pivot_tol);
      op.pivot = cf.pivot;
      op.urs = cf.urs;
      op.lsr = cf.lsr;
      lf.elim[k] = std::move(cf);

      if (rdim > 0) {
        // TRSM strips across the dense neighborhood.
        for (int64_t j : st.sys.near_cols[k]) {
          if (j == k) continue;
          const Matrix& S = st.nearS.at({k, j});
          DepCoupling c;
          c.partner = j;
          c.skeleton_only = j < k;
          const int64_t c0 = c.skeleton_only ? st.sys.dims[j] - rank_elim[j] : 0;
          const int64_t nc = c.skeleton_only ? rank_elim[j] : st.sys.dims[j];
          c.strip = S.block(0, c0, rdim, nc);
          op.pivot.solve_lower_in_place(c.strip);
          op.row.push_back(std::move(c));
        }
        for (int64_t i : st.sys.near_cols[k]) {
          if (i == k) continue;
          const Matrix& S = st.nearS.at({i, k});
          DepCoupling c;
          c.partner = i;
          c.skeleton_only = i < k;
          const int64_t r0 = c.skeleton_only ? st.sys.dims[i] - rank_elim[i] : 0;
          const int64_t nr = c.skeleton_only ? rank_elim[i] : st.sys.dims[i];
          c.strip = S.block(r0, 0, nr, rdim);
          op.pivot.solve_upper_right_in_place(c.strip);
          op.col.push_back(std::move(c));
        }

        // Schur updates into every pair of the pivot's neighborhood. The own
        // skeleton row/column participates through lsr/urs.
        struct Piece {
          int64_t idx;
          const Matrix* mat;
          int64_t offset;  // row (col) offset inside the full block coords
        };
        std::vector<Piece> rows_p, cols_p;
        cols_p.push_back({k, &op.lsr, dim - rank});
        for (const auto& c : op.col)
          cols_p.push_back({c.partner, &c.strip,
                            c.skeleton_only ? st.sys.dims[c.partner] - rank_elim[c.partner] : 0});
        rows_p.push_back({k, &op.urs, dim - rank});
        for (const auto& c : op.row)
          rows_p.push_back({c.partner, &c.strip,
                            c.skeleton_only ? st.sys.dims[c.partner] - rank_elim[c.partner] : 0});

        // Fills touching redundant coordinates are buffered in block
        // coordinates and recompressed after this pivot's updates; all data
        // above is expressed in the pre-update bases.
        struct FillBuf {
          Matrix F;
          bool row_touch = false;
          bool col_touch = false;
        };
        std::map<PairKey, FillBuf> fill_buf;
        for (const auto& pi : cols_p) {
          for (const auto& pj : rows_p) {
            if (pi.idx == k && pj.idx == k) continue;  // own SS done in eliminate_block
            Matrix delta = matmul(*pi.mat, *pj.mat, false, false, -1.0);
            const int64_t i = pi.idx, j = pj.idx;
            if (i == j) {
              st.diag_S[i].add_block(pi.offset, pj.offset, delta, 1.0);
              continue;
            }
            if (bs().is_near(lvl, i, j)) {
              st.nearS.at({i, j}).add_block(pi.offset, pj.offset, delta, 1.0);
              continue;
            }
            const bool row_touch = (i > k) && pi.offset == 0;
            const bool col_touch = (j > k) && pj.offset == 0;
            if (!row_touch && !col_touch) {
              // Pure skeleton content: no recompression needed.
              if (bs().is_far(lvl, i, j)) {
                auto it = st.farSS.find({i, j});
                if (it == st.farSS.end())
                  st.farSS.emplace(PairKey{i, j}, std::move(delta));
                else
                  it->second.add_block(0, 0, delta, 1.0);
              } else {
                push_deposit(lvl, i, j, std::move(delta));
              }
              continue;
            }
            Matrix emb(st.sys.dims[i], st.sys.dims[j]);
            emb.set_block(pi.offset, pj.offset, delta);
            Matrix F = matmul(matmul(out.bases.U[lvl][i].square(), emb),
                              out.bases.V[lvl][j].square(), false, true);
            auto& buf = fill_buf[{i, j}];
            if (buf.F.rows == 0) buf.F = std::move(F);
            else buf.F.add_block(0, 0, F, 1.0);
            buf.row_touch |= row_touch;
            buf.col_touch |= col_touch;
          }
        }
        log.ops.push_back(std::move(op));
        for (auto& [key, buf] : fill_buf)
          absorb_fill(st, log, key.first, key.second, buf.F, buf.row_touch, buf.col_touch,
                      level_max);
      } else {
        log.ops.push_back(std::move(op));
      }
    }
  }

  DenseSystem merge(const State& st) {
    PhaseScope phase(Phase::factorize);
    const int lvl = st.lvl;
    const int64_t mp = int64_t(1) << (lvl - 1);
    DenseSystem next;
    next.dims.resize(mp);
    for (int64_t I = 0; I < mp; ++I)
      next.dims[I] = rank_of(lvl, 2 * I) + rank_of(lvl, 2 * I + 1);
    next.near_cols = bs().level[lvl - 1].near_cols;
    for (int64_t I = 0; I < mp; ++I) {
      for (int64_t J : next.near_cols[I]) {
        Matrix B(next.dims[I], next.dims[J]);
        for (int64_t a = 0; a < 2; ++a)
          for (int64_t b = 0; b < 2; ++b) {
            const int64_t ci = 2 * I + a, cj = 2 * J + b;
            const int64_t r0 = a == 0 ? 0 : rank_of(lvl, 2 * I);
            const int64_t c0 = b == 0 ? 0 : rank_of(lvl, 2 * J);
            const int64_t ri = rank_of(lvl, ci), rj = rank_of(lvl, cj);
            if (ci == cj) {
              const Matrix& f = st.diag_S[ci];
              if (ri > 0) B.set_block(r0, c0, f.block(f.rows - ri, f.cols - ri, ri, ri));
            } else if (st.nearS.count({ci, cj})) {
              const Matrix& f = st.nearS.at({ci, cj});
              if (ri > 0 && rj > 0)
                B.set_block(r0, c0, f.block(f.rows - ri, f.cols - rj, ri, rj));
            } else if (st.farSS.count({ci, cj})) {
              B.set_block(r0, c0, st.farSS.at({ci, cj}));
            }
          }
        next.put(I, J, std::move(B));
      }
    }
    return next;
  }

  void run(FactorInputs&& inputs) {
    out.variant = opts.variant;
    out.H = &H;
    out.bases = std::move(inputs.bases);
    if (out.bases.levels == 0) out.bases.init(leaf());

    State st;
    st.lvl = leaf();
    st.sys = std::move(inputs.leaf_sys);

    while (true) {
      const bool is_leaf = (st.lvl == leaf());
      std::map<PairKey, Matrix> wcache;
      if (!is_leaf) {
        FillInSet none;
        wcache = compute_wcache(st.lvl);
        build_transfers(st.lvl, st.sys, none, wcache, false);
      }

      // Full skeletons: every dense block in its square-basis coordinates.
      {
        PhaseScope phase(Phase::factorize);
        const int64_t m = st.sys.m();
        st.diag_S.assign(m, Matrix());
        st.nearS.clear();
        st.farSS.clear();
        parallel_for(m, opts.threads, [&](int64_t i) {
          Matrix Ui = out.bases.U[st.lvl][i].square();
          st.diag_S[i] = matmul(matmul(Ui, st.sys.block(i, i), true, false),
                                out.bases.V[st.lvl][i].square());
        });
        for (int64_t i = 0; i < m; ++i) {
          Matrix Ui = out.bases.U[st.lvl][i].square();
          for (int64_t j : st.sys.near_cols[i]) {
            if (j == i) continue;
            st.nearS[{i, j}] = matmul(matmul(Ui, st.sys.block(i, j), true, false),
                                      out.bases.V[st.lvl][j].square());
          }
          for (int64_t j : bs().level[st.lvl].far_cols[i])
            st.farSS[{i, j}] = far_base_content(st.lvl, i, j, wcache);
        }
        for (auto& [key, SS] : st.farSS) apply_deposits_far(st.lvl, key.first, key.second, SS);
      }

      DepLevel log;
      {
        const int64_t m = st.sys.m();
        log.U0.resize(m);
        log.V0.resize(m);
        for (int64_t i = 0; i < m; ++i) {
          log.U0[i] = out.bases.U[st.lvl][i].square();
          log.V0[i] = out.bases.V[st.lvl][i].square();
        }
      }

      LevelFactors lf = start_level_factors(st.lvl, st.sys);
      out.max_fill_residual_rel.push_back(0.0);
      eliminate_sequential(st, log, lf, &out.max_fill_residual_rel.back());
      finish_level_ranks(lf);
      lf.use_z = false;
      layer = is_leaf ? make_leaf_layer(out.bases) : lift_layer(layer, out.bases, st.lvl);

      DenseSystem next = merge(st);
      out.levels.push_back(std::move(lf));
      out.dep.push_back(std::move(log));

      const int next_lvl = st.lvl - 1;
      if (next_lvl <= 1 || next.total_dim() <= 4 * H.tree.leaf_size_target) {
        assemble_top(next_lvl, std::move(next));
        break;
      }
      State fresh;
      fresh.lvl = next_lvl;
      fresh.sys = std::move(next);
      st = std::move(fresh);
    }
  }
};

}  // namespace

// ---------------------------------------------------------------------------

FactorInputs prepare_factor_inputs(const HMatrix& H, const FactorOptions& opts) {
  FactorInputs in;
  in.leaf_sys = leaf_dense_system(H);
  const bool wants_fills = opts.variant == FactorVariant::h2nodep && in.leaf_sys.has_offdiag();
  if (wants_fills)
    in.leaf_fills = precompute_fillins(in.leaf_sys, opts.rr_pivot_tol, opts.threads);
  BasisBuildOptions b;
  b.tol = opts.tol;
  b.cap = opts.cap;
  b.threads = opts.threads;
  b.absorb_coupling = opts.absorb_coupling && opts.variant == FactorVariant::h2nodep;
  // Basis concatenations take the off-diagonal fills; diagonal fills are
  // carried exactly inside the pivot blocks.
  FillInSet basis_fills;
  for (const auto& [key, F] : in.leaf_fills.fills)
    if (key.first != key.second) basis_fills.fills[key] = F;
  in.bases = build_leaf_bases(H, basis_fills, &in.leaf_sys, b);
  return in;
}

ULVFactors factorize(const HMatrix& H, FactorInputs inputs, const FactorOptions& opts) {
  FlopCounter& fc = FlopCounter::instance();
  const uint64_t f0 = fc.phase_total(Phase::fills) + fc.phase_total(Phase::factorize);
  ULVFactors out;
  if (opts.variant == FactorVariant::h2dep) {
    DepDriver d(H, opts);
    d.run(std::move(inputs));
    out = std::move(d.out);
  } else {
    NodepDriver d(H, opts);
    d.run(std::move(inputs));
    out = std::move(d.out);
  }
  out.metric_flops = fc.phase_total(Phase::fills) + fc.phase_total(Phase::factorize) - f0;
  return out;
}

ULVFactors build_and_factorize(const HMatrix& H, const FactorOptions& opts) {
  return factorize(H, prepare_factor_inputs(H, opts), opts);
}

// ---------------------------------------------------------------------------

std::vector<LevelPlan> dependency_graph(const HMatrix& H, FactorVariant variant) {
  std::vector<LevelPlan> plans;
  const auto& bs = H.structure;
  for (int lvl = bs.levels; lvl >= 1; --lvl) {
    const int64_t m = int64_t(1) << lvl;
    bool any = false;
    for (int64_t i = 0; i < m && !any; ++i)
      if (!bs.level[lvl].near_cols[i].empty() || !bs.level[lvl].far_cols[i].empty()) any = true;
    if (!any) continue;
    LevelPlan plan;
    plan.level = lvl;
    for (int64_t i = 0; i < m; ++i) plan.rows.push_back(i);
    if (variant == FactorVariant::h2dep) {
      // Task k writes the trailing blocks of its dense neighborhood (Schur
      // targets and fills); task k' reads its whole neighborhood.
      std::vector<std::set<PairKey>> writes(m), reads(m);
      for (int64_t k = 0; k < m; ++k) {
        for (int64_t i : bs.level[lvl].near_cols[k])
          for (int64_t j : bs.level[lvl].near_cols[k]) {
            reads[k].insert({i, j});
            if (i > k || j > k) writes[k].insert({i, j});
          }
      }
      for (int64_t a = 0; a < m; ++a)
        for (int64_t b = a + 1; b < m; ++b) {
          bool hit = false;
          for (const auto& w : writes[a])
            if (reads[b].count(w)) {
              hit = true;
              break;
            }
          if (hit) plan.edges.push_back({a, b});
        }
    } else {
      // Each task reads frozen level inputs and writes only its own factor
      // slot; the write sets are disjoint by construction.
      std::vector<std::set<PairKey>> writes(m);
      for (int64_t k = 0; k < m; ++k) writes[k].insert({k, k});
      for (int64_t a = 0; a < m; ++a)
        for (int64_t b = a + 1; b < m; ++b)
          for (const auto& wa : writes[a])
            if (writes[b].count(wa)) plan.edges.push_back({a, b});
    }
    plans.push_back(std::move(plan));
    if (variant == FactorVariant::blr2) break;
  }
  return plans;
}

std::string plans_to_dot(const std::vector<LevelPlan>& plans) {
  std::string dot = "digraph ulv_dependencies {\n";
  for (const auto& p : plans) {
    for (int64_t r : p.rows)
      dot += "  \"L" + std::to_string(p.level) + "_" + std::to_string(r) + "\";\n";
    for (const auto& [a, b] : p.edges)
      dot += "  \"L" + std::to_string(p.level) + "_" + std::to_string(a) + "\" -> \"L" +
             std::to_string(p.level) + "_" + std::to_string(b) + "\";\n";
  }
  dot += "}\n";
  return dot;
}

}  // namespace h2ulv
