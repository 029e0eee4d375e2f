#include "h2ulv/hstructure.hpp"

#include <algorithm>
#include <stdexcept>

#include "h2ulv/flops.hpp"
#include "h2ulv/parallel.hpp"

namespace h2ulv {

namespace {

bool contains(const std::vector<int64_t>& v, int64_t x) {
  return std::binary_search(v.begin(), v.end(), x);
}

}  // namespace

BlockKind BlockStructure::kind(int lvl, int64_t i, int64_t j) const {
  if (lvl <= 0 || lvl > levels) throw std::invalid_argument("BlockStructure::kind: bad level");
  if (contains(level[lvl].far_cols[i], j)) return BlockKind::lowrank;
  if (contains(level[lvl].near_cols[i], j))
    return lvl == levels ? BlockKind::dense : BlockKind::subdivided;
  return BlockKind::covered;
}

bool BlockStructure::is_near(int lvl, int64_t i, int64_t j) const {
  return contains(level[lvl].near_cols[i], j);
}

bool BlockStructure::is_far(int lvl, int64_t i, int64_t j) const {
  return contains(level[lvl].far_cols[i], j);
}

int BlockStructure::covering_level(int64_t leaf_i, int64_t leaf_j) const {
  int64_t i = leaf_i, j = leaf_j;
  for (int lvl = levels; lvl >= 1; --lvl) {
    if (is_near(lvl, i, j) || is_far(lvl, i, j)) return lvl;
    i >>= 1;
    j >>= 1;
  }
  throw std::logic_error("covering_level: pair not covered by any level");
}

int64_t BlockStructure::dense_count(int lvl) const {
  int64_t s = 0;
  for (const auto& row : level[lvl].near_cols) s += static_cast<int64_t>(row.size());
  return s;
}

int64_t BlockStructure::far_count(int lvl) const {
  int64_t s = 0;
  for (const auto& row : level[lvl].far_cols) s += static_cast<int64_t>(row.size());
  return s;
}

int64_t BlockStructure::max_dense_per_row(int lvl) const {
  int64_t s = 0;
  for (const auto& row : level[lvl].near_cols)
    s = std::max(s, static_cast<int64_t>(row.size()));
  return s;
}

BlockStructure classify_blocks(const ClusterTree& tree, const AdmissibilityRule& rule,
                               StructureVariant variant) {
  BlockStructure bs;
  bs.variant = variant;
  bs.levels = tree.levels;
  bs.level.resize(tree.levels + 1);
  for (int lvl = 1; lvl <= tree.levels; ++lvl) {
    bs.level[lvl].near_cols.resize(tree.num_clusters(lvl));
    bs.level[lvl].far_cols.resize(tree.num_clusters(lvl));
  }

  if (variant == StructureVariant::blr2) {
    // Flat format: every leaf pair classified directly, no hierarchy.
    const int lvl = tree.levels;
    const int64_t m = tree.num_clusters(lvl);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < m; ++j) {
        Admissibility a = admissible(tree, lvl, i, j, rule);
        if (a == Admissibility::admissible)
          bs.level[lvl].far_cols[i].push_back(j);
        else
          bs.level[lvl].near_cols[i].push_back(j);
      }
    return bs;
  }

  // Top-down sweep from level 1; subdivided pairs spawn their child pairs.
  std::vector<std::pair<int64_t, int64_t>> active;
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j) active.push_back({i, j});
  for (int lvl = 1; lvl <= tree.levels; ++lvl) {
    std::vector<std::pair<int64_t, int64_t>> next;
    for (auto [i, j] : active) {
      Admissibility a = admissible(tree, lvl, i, j, rule);
      if (a == Admissibility::admissible) {
        bs.level[lvl].far_cols[i].push_back(j);
      } else {
        bs.level[lvl].near_cols[i].push_back(j);
        if (lvl < tree.levels)
          for (int64_t ci = 0; ci < 2; ++ci)
            for (int64_t cj = 0; cj < 2; ++cj) next.push_back({2 * i + ci, 2 * j + cj});
      }
    }
    active = std::move(next);
  }
  for (int lvl = 1; lvl <= tree.levels; ++lvl) {
    for (auto& row : bs.level[lvl].near_cols) std::sort(row.begin(), row.end());
    for (auto& row : bs.level[lvl].far_cols) std::sort(row.begin(), row.end());
  }
  return bs;
}

Matrix SharedBasis::square() const { return hconcat(Qr, Qs); }

void SharedBasisSet::init(int levels_) {
  levels = levels_;
  U.assign(levels + 1, {});
  V.assign(levels + 1, {});
  for (int lvl = 0; lvl <= levels; ++lvl) {
    U[lvl].resize(int64_t(1) << lvl);
    V[lvl].resize(int64_t(1) << lvl);
  }
}

const Matrix& HMatrix::leaf_block(int64_t i, int64_t j) const {
  const auto& cols = structure.level[tree.levels].near_cols[i];
  auto it = std::lower_bound(cols.begin(), cols.end(), j);
  if (it == cols.end() || *it != j) throw std::out_of_range("HMatrix::leaf_block: not a dense block");
  return leaf_dense[i][it - cols.begin()];
}

int64_t HMatrix::stored_dense_entries() const {
  int64_t s = 0;
  for (const auto& row : leaf_dense)
    for (const auto& b : row) s += b.size();
  return s;
}

HMatrix materialize_dense(const BlockStructure& structure, const ClusterTree& tree,
                          const PointCloud& cloud, const KernelSpec& kernel,
                          StructureVariant variant, int threads) {
  HMatrix H;
  H.variant = variant;
  H.tree = tree;
  H.cloud = &cloud;
  H.kernel = kernel;
  H.structure = structure;
  const int lvl = tree.levels;
  const int64_t m = tree.num_clusters(lvl);
  H.leaf_dense.resize(m);
  PhaseScope phase(Phase::assemble);
  parallel_for(m, threads, [&](int64_t i) {
    const auto& cols = structure.level[lvl].near_cols[i];
    H.leaf_dense[i].resize(cols.size());
    for (size_t c = 0; c < cols.size(); ++c) {
      H.leaf_dense[i][c] =
          assemble_block(kernel, cloud, H.cluster_range(lvl, i), H.cluster_range(lvl, cols[c]));
    }
  });
  return H;
}

std::vector<LevelSummary> summarize_structure(const HMatrix& H, const SharedBasisSet* bases) {
  std::vector<LevelSummary> out;
  for (int lvl = 1; lvl <= H.structure.levels; ++lvl) {
    LevelSummary s;
    s.level = lvl;
    s.dense_blocks = H.structure.dense_count(lvl);
    s.lowrank_blocks = H.structure.far_count(lvl);
    if (bases && lvl < static_cast<int>(bases->U.size()) && !bases->U[lvl].empty()) {
      int64_t total = 0, count = 0;
      for (const auto& b : bases->U[lvl]) {
        if (b.dim() == 0) continue;
        s.max_rank = std::max(s.max_rank, b.rank());
        total += b.rank();
        ++count;
      }
      s.mean_rank = count ? static_cast<double>(total) / count : 0.0;
    }
    if (lvl == H.structure.levels) s.stored_entries += H.stored_dense_entries();
    out.push_back(s);
  }
  return out;
}

}  // namespace h2ulv
