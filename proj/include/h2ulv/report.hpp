#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "h2ulv/solve.hpp"
#include "h2ulv/ulv.hpp"

namespace h2ulv {

struct RunConfig {
  int64_t n = 1024;
  int64_t leaf_size = 256;
  double tol = 1e-8;
  std::optional<int64_t> cap;
  KernelKind kernel = KernelKind::laplace;
  double alpha_m = 1.0;
  std::optional<double> reg;  // default: 1e-3 * domain diameter / N^(1/3)
  double scale = 4.0 * 3.14159265358979323846;
  std::string geometry = "cube";  // cube | line | sphere
  int64_t spheres = 1;
  double spacing = 3.0;
  std::optional<AdmissibilityKind> admissibility;  // default follows structure
  double eta = 1.0;
  StructureVariant structure = StructureVariant::h2;
  bool dep = false;
  int threads = 1;
  uint64_t seed = 42;
  bool oracle = true;
  int64_t oracle_guard = 16384;
  bool absorb_coupling = true;
  std::string points_file;  // import instead of generating

  void validate() const;
  AdmissibilityKind effective_admissibility() const;
  FactorVariant factor_variant() const;
};

struct LevelRankStats {
  int level = 0;
  int64_t dense_blocks = 0;
  int64_t lowrank_blocks = 0;
  int64_t max_rank = 0;
  double mean_rank = 0.0;
};

struct RunReport {
  std::string schema = "h2ulv-report/1";
  RunConfig config;
  std::map<std::string, double> phase_seconds;
  std::map<std::string, uint64_t> phase_flops;
  uint64_t total_flops = 0;
  uint64_t factorization_flops = 0;  // fill_precompute + factorize phases
  uint64_t kernel_evals = 0;
  std::vector<LevelRankStats> levels;
  int64_t top_level_max_rank = 0;
  int64_t max_leaf_rank = 0;
  int64_t dense_blocks_leaf = 0;
  int64_t stored_entries = 0;
  int64_t memory_bytes = 0;
  double solve_rel_error = -1.0;  // vs dense LU oracle; -1 when skipped
  double max_fill_residual_rel = 0.0;
  int64_t dependency_edges = 0;
  double total_seconds = 0.0;

  std::string to_json() const;
};

// Owns the whole build: points, tree, structure, materialized matrix and the
// factorization. The CLI and the python module drive this object.
class Pipeline {
 public:
  explicit Pipeline(const RunConfig& cfg);

  void build();      // points, tree, classification, dense leaf blocks
  void factor();     // bases + fills + ULV factorization
  Matrix solve_rhs(const Matrix& b) const;
  RunReport report();  // runs oracle verification when enabled

  const RunConfig& config() const { return cfg_; }
  const PointCloud& original_cloud() const { return original_; }
  const HMatrix& hmatrix() const { return *H_; }
  const ULVFactors& factors() const { return factors_; }
  const KernelSpec& kernel() const { return kernel_; }

 private:
  RunConfig cfg_;
  PointCloud original_;
  std::unique_ptr<ClusterTreeResult> tree_;
  std::unique_ptr<HMatrix> H_;
  ULVFactors factors_;
  KernelSpec kernel_;
  bool built_ = false;
  bool factored_ = false;
  double build_seconds_ = 0.0;
  double factor_seconds_ = 0.0;
};

PointCloud make_cloud(const RunConfig& cfg);
KernelSpec make_kernel(const RunConfig& cfg, const PointCloud& cloud);

RunReport run_pipeline(const RunConfig& cfg);

// Offline distributed partition plan computed from measured skeleton ranks.
std::string partition_plan_json(Pipeline& pipe, int64_t processes);
// Structure summary export (per-level block counts, ranks, stored bytes).
std::string structure_summary_json(const HMatrix& H, const SharedBasisSet* bases);

}  // namespace h2ulv
