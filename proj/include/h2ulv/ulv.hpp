#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "h2ulv/compression.hpp"
#include "h2ulv/hstructure.hpp"

namespace h2ulv {

enum class FactorVariant { blr2, hss, h2dep, h2nodep };

const char* variant_name(FactorVariant v);

// Emitted for every fill-in block as it is generated/absorbed during the
// factorization; residuals are measured through the fixed shared bases.
struct FillEvent {
  int level = 0;
  int64_t row = 0;
  int64_t col = 0;
  double norm = 0.0;      // ||F||_F
  double residual = 0.0;  // ||F - Us Us^T F Vs Vs^T||_F through the fixed bases
};

struct FactorOptions {
  FactorVariant variant = FactorVariant::h2nodep;
  double tol = 1e-8;
  std::optional<int64_t> cap;
  int threads = 1;
  double rr_pivot_tol = 1e-13;  // |pivot| > rr_pivot_tol * max|S^RR|
  // Row-side coupling absorption (A_kp App^-1 Us_p products in the concats).
  bool absorb_coupling = true;
  // Abort when a fill's projection residual exceeds this multiple of tol*||F||.
  double abort_residual_factor = 100.0;
  std::function<void(const FillEvent&)> fill_observer;
  // Test hook: run each level's block-row eliminations sequentially in a
  // seeded random order instead of the parallel map.
  std::optional<uint64_t> task_order_seed;
  // Test hook: keep pre-elimination diagonal skeletons in the factors.
  bool keep_diag_skeletons = false;
};

// Per-block LU pieces of one eliminated diagonal skeleton block.
struct ClusterFactors {
  LuFactors pivot;  // LU of S^RR (block-local partial pivoting)
  Matrix urs;       // L^-1 P S^RS
  Matrix lsr;       // S^SR U^-1
  int64_t rdim = 0;
  int64_t sdim = 0;
};

// Free-standing elimination of one diagonal skeleton block: factors the RR
// part and applies the Schur update to the SS part in place.
ClusterFactors eliminate_block(Matrix& S, int64_t rdim, double pivot_tol);

struct LevelFactors {
  int level = 0;
  std::vector<int64_t> dims;
  std::vector<int64_t> ranks;
  std::vector<ClusterFactors> elim;
  DenseSystem sys;     // this level's dense blocks (leaf views the HMatrix)
  bool use_z = false;  // forward/backward RHS combination needed
  std::vector<Matrix> diag_pre;  // kept when keep_diag_skeletons is set
};

// Sequential (h2dep) op log: interleaved basis updates and eliminations,
// replayed by the solver in the same order.
struct DepBasisOp {
  int64_t cluster = 0;
  bool row_side = true;
  Matrix omega;  // full square change of basis, new^T old
};
struct DepCoupling {
  int64_t partner = 0;
  bool skeleton_only = false;  // strip covers only the partner's S part
  Matrix strip;
};
struct DepElimOp {
  int64_t k = 0;
  LuFactors pivot;
  Matrix urs;  // own RS coupling
  Matrix lsr;  // own SR coupling
  std::vector<DepCoupling> row;  // U-factor strips to partner columns
  std::vector<DepCoupling> col;  // L-factor strips from partner rows
  int64_t rdim = 0;
  int64_t sdim = 0;
};
using DepOp = std::variant<DepBasisOp, DepElimOp>;

struct DepLevel {
  std::vector<DepOp> ops;
  std::vector<Matrix> U0, V0;  // square bases at level entry
};

struct ULVFactors {
  FactorVariant variant = FactorVariant::h2nodep;
  const HMatrix* H = nullptr;  // must outlive the factors
  SharedBasisSet bases;        // final bases, leaf + transfers
  std::vector<LevelFactors> levels;  // processed levels, leaf first
  std::vector<DepLevel> dep;         // parallel to `levels` for h2dep
  int cutoff_level = 0;
  std::vector<int64_t> cutoff_dims;
  LuFactors top;
  uint64_t metric_flops = 0;  // fill_precompute + factorize phases
  std::vector<double> max_fill_residual_rel;  // per processed level

  int64_t n() const;
};

// Leaf inputs assembled per variant by prepare_factor_inputs.
struct FactorInputs {
  SharedBasisSet bases;
  FillInSet leaf_fills;
  DenseSystem leaf_sys;
};

FactorInputs prepare_factor_inputs(const HMatrix& H, const FactorOptions& opts);
ULVFactors factorize(const HMatrix& H, FactorInputs inputs, const FactorOptions& opts);
ULVFactors build_and_factorize(const HMatrix& H, const FactorOptions& opts);

// Intra-level task dependency structure derived from read/write sets.
struct LevelPlan {
  int level = 0;
  std::vector<int64_t> rows;
  std::vector<std::pair<int64_t, int64_t>> edges;
};
std::vector<LevelPlan> dependency_graph(const HMatrix& H, FactorVariant variant);
std::string plans_to_dot(const std::vector<LevelPlan>& plans);

}  // namespace h2ulv
