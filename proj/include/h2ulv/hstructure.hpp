#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "h2ulv/geometry.hpp"
#include "h2ulv/kernels.hpp"
#include "h2ulv/linalg.hpp"
#include "h2ulv/matrix.hpp"

namespace h2ulv {

enum class StructureVariant { blr2, hss, h2 };

struct BlockId {
  int level = 0;
  int64_t row = 0;
  int64_t col = 0;
  bool operator<(const BlockId& o) const {
    if (level != o.level) return level < o.level;
    if (row != o.row) return row < o.row;
    return col < o.col;
  }
};

enum class BlockKind { dense, lowrank, subdivided, covered };

// Per-level classification of every active cluster pair. "near" pairs are
// kept dense (leaf) or subdivided (non-leaf); "far" pairs are low-rank at
// their level. Pairs inside a coarser far block are not active ("covered").
struct BlockStructure {
  StructureVariant variant = StructureVariant::h2;
  int levels = 0;

  struct LevelPattern {
    std::vector<std::vector<int64_t>> near_cols;  // sorted, diagonal included
    std::vector<std::vector<int64_t>> far_cols;   // sorted
  };
  std::vector<LevelPattern> level;  // indexed by tree level; [0] unused

  BlockKind kind(int lvl, int64_t i, int64_t j) const;
  bool is_near(int lvl, int64_t i, int64_t j) const;
  bool is_far(int lvl, int64_t i, int64_t j) const;
  // Shallowest active level covering the leaf pair (i, j); the pair of
  // ancestors at that level is dense or low-rank there.
  int covering_level(int64_t leaf_i, int64_t leaf_j) const;

  int64_t dense_count(int lvl) const;
  int64_t far_count(int lvl) const;
  int64_t max_dense_per_row(int lvl) const;
};

BlockStructure classify_blocks(const ClusterTree& tree, const AdmissibilityRule& rule,
                               StructureVariant variant);

// One shared basis: orthonormal [Qr | Qs] with redundant columns first. At
// the leaf Qs/Qr act on point rows; at upper levels they act on the stacked
// child skeleton coordinates (transfer matrices).
struct SharedBasis {
  Matrix Qs;
  Matrix Qr;
  int64_t rank() const { return Qs.cols; }
  int64_t dim() const { return Qs.rows; }
  Matrix square() const;  // [Qr | Qs]
};

struct SharedBasisSet {
  int levels = 0;
  std::vector<std::vector<SharedBasis>> U;  // [level][cluster], row bases
  std::vector<std::vector<SharedBasis>> V;  // [level][cluster], column bases

  void init(int levels_);
  int64_t rank(int lvl, int64_t i) const { return U[lvl][i].rank(); }
};

// Hierarchical container: classification plus materialized leaf dense
// blocks. Low-rank blocks stay as assembly recipes (cluster ranges); the
// compression pass projects them lazily.
struct HMatrix {
  StructureVariant variant = StructureVariant::h2;
  ClusterTree tree;
  const PointCloud* cloud = nullptr;
  KernelSpec kernel;
  BlockStructure structure;

  // Leaf dense blocks aligned with structure.level[levels].near_cols.
  std::vector<std::vector<Matrix>> leaf_dense;

  int leaf_level() const { return tree.levels; }
  IndexRange cluster_range(int lvl, int64_t i) const {
    const ClusterNode& nd = tree.node(lvl, i);
    return {nd.begin, nd.end};
  }
  const Matrix& leaf_block(int64_t i, int64_t j) const;

  int64_t stored_dense_entries() const;
};

HMatrix materialize_dense(const BlockStructure& structure, const ClusterTree& tree,
                          const PointCloud& cloud, const KernelSpec& kernel,
                          StructureVariant variant, int threads = 1);

struct LevelSummary {
  int level = 0;
  int64_t dense_blocks = 0;
  int64_t lowrank_blocks = 0;
  int64_t max_rank = 0;
  double mean_rank = 0.0;
  int64_t stored_entries = 0;
};

std::vector<LevelSummary> summarize_structure(const HMatrix& H, const SharedBasisSet* bases);

}  // namespace h2ulv
