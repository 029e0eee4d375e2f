#pragma once

#include <cstdint>
#include <vector>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "h2ulv/hstructure.hpp"
#include "h2ulv/linalg.hpp"

namespace h2ulv {

using PairKey = std::pair<int64_t, int64_t>;

// One level's dense (near) block system: the inputs the fill pre-computation
// and the per-level elimination work on. Leaf levels view the HMatrix blocks;
// merged upper levels own their storage.
struct DenseSystem {
  std::vector<int64_t> dims;
  std::vector<std::vector<int64_t>> near_cols;  // sorted partner lists, diagonal included
  // Blocks are slots: non-negative indexes into owned storage, negative into
  // external views (the HMatrix leaf blocks).
  std::map<PairKey, int64_t> slots;
  std::vector<Matrix> owned;
  std::vector<const Matrix*> views;
  std::vector<LuFactors> diag_lu;  // cached by precompute_fillins

  int64_t m() const { return static_cast<int64_t>(dims.size()); }
  bool has(int64_t i, int64_t j) const { return slots.count({i, j}) != 0; }
  const Matrix& block(int64_t i, int64_t j) const;
  void put(int64_t i, int64_t j, Matrix&& B);
  void put_view(int64_t i, int64_t j, const Matrix* B);
  bool has_offdiag() const;
  int64_t total_dim() const;
};

DenseSystem leaf_dense_system(const HMatrix& H);

// Fill-in blocks stored separately from the dense blocks, keyed by target.
struct FillInSet {
  std::map<PairKey, Matrix> fills;

  bool empty() const { return fills.empty(); }
  const Matrix* find(int64_t i, int64_t j) const {
    auto it = fills.find({i, j});
    return it == fills.end() ? nullptr : &it->second;
  }
};

// First-order Schur products through the cached diagonal LU factors:
// F_{c,j} -= A_{c,p} A_{p,p}^{-1} A_{p,j} summed over common dense
// neighbors p. Diagonal targets (c == j) included. Caches LU(A_pp) in sys.
FillInSet precompute_fillins(DenseSystem& sys, double pivot_tol, int threads);

struct BasisBuildOptions {
  double tol = 1e-8;
  std::optional<int64_t> cap;
  int threads = 1;
  // Per-member stopping: keep stepping the pivoted QR until every member's
  // leftover mass is below member_tol_factor * tol * ||member||_F.
  double member_tol_factor = 0.5;
  // Augment row concatenations with A_{kp} A_pp^{-1} Us_p coupling products
  // so the row-combined off-diagonal content is fully representable.
  bool absorb_coupling = false;
};

// Pivoted QR basis over a list of column-group members; rank extended to
// min_rank with complement directions when the content runs out.
SharedBasis basis_from_members(const std::vector<Matrix>& members, int64_t dim,
                               const BasisBuildOptions& opts, int64_t min_rank);

// Leaf shared bases from the concatenation of every admissible block
// touching each leaf row/column (own level and coarser levels).
SharedBasisSet build_shared_bases(const HMatrix& H, double tol, std::optional<int64_t> cap,
                                  int threads = 1);
// Same with the fill blocks prepended to each concatenation (Eqs. fillu/fillv
// shape). An empty fill set degenerates to build_shared_bases bitwise.
SharedBasisSet build_shared_bases_with_fill(const HMatrix& H, const FillInSet& fills, double tol,
                                            std::optional<int64_t> cap, int threads = 1);
// Pipeline entry: optionally augments the row side with coupling products
// (requires the leaf dense system with cached diagonal LUs).
SharedBasisSet build_leaf_bases(const HMatrix& H, const FillInSet& fills, DenseSystem* leaf_sys,
                                const BasisBuildOptions& opts);

// Full 2x2 skeletons for every dense leaf block (congruence through the
// square bases) and S^SS for every leaf far block.
struct SkeletonSystem {
  std::map<PairKey, Matrix> near_S;
  std::map<PairKey, Matrix> far_SS;
};
SkeletonSystem compute_skeletons(const HMatrix& H, const SharedBasisSet& bases, int threads = 1);

// Composed ("big") bases of every cluster at one level, point rows x rank.
struct BigBasisLayer {
  int level = 0;
  std::vector<Matrix> Ubig, Vbig;
};
BigBasisLayer make_leaf_layer(const SharedBasisSet& bases);
BigBasisLayer lift_layer(const BigBasisLayer& child, const SharedBasisSet& bases, int level);

// blockdiag(child Ubig)^T * A(K, cols) for cluster K at level lvl; the row
// coordinates are K's stacked child skeletons.
Matrix project_rows_to_merged(const HMatrix& H, const BigBasisLayer& child_layer, int lvl,
                              int64_t K, IndexRange cols);
// Both sides projected: rows K's stacked child skeletons, cols J's.
Matrix project_pair_to_merged(const HMatrix& H, const BigBasisLayer& child_layer, int lvl,
                              int64_t K, int64_t J);

// Far partners of K's ancestors: (level, partner) pairs for levels < lvl.
std::vector<std::pair<int, int64_t>> ancestor_far_partners(const BlockStructure& bs, int lvl,
                                                           int64_t K);

// Basis update absorbing a fill into a row/column basis (sequential driver).
// Members are the old Us * S^SS products of the row plus the fill content in
// block coordinates; omega is the full square change of basis new^T old.
struct BasisUpdate {
  Matrix omega;    // dim x dim
  Matrix tau;      // new_rank x old_rank skeleton transform
  int64_t old_rank = 0;
  int64_t new_rank = 0;
  double fill_residual = 0.0;  // ||(I - Qs Qs^T) F||_F after the update
};
BasisUpdate absorb_fill_row_basis(SharedBasis& Ui, const std::vector<Matrix>& row_products,
                                  const Matrix& fill, const BasisBuildOptions& opts);
BasisUpdate absorb_fill_col_basis(SharedBasis& Vj, const std::vector<Matrix>& col_products,
                                  const Matrix& fill, const BasisBuildOptions& opts);

}  // namespace h2ulv
