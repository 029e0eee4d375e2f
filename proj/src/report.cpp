#include "h2ulv/report.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "h2ulv/flops.hpp"

namespace h2ulv {

using json = nlohmann::ordered_json;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

const char* structure_name(StructureVariant v) {
  switch (v) {
    case StructureVariant::blr2: return "blr2";
    case StructureVariant::hss: return "hss";
    default: return "h2";
  }
}

}  // namespace

AdmissibilityKind RunConfig::effective_admissibility() const {
  if (admissibility) return *admissibility;
  return structure == StructureVariant::h2 ? AdmissibilityKind::strong : AdmissibilityKind::weak;
}

FactorVariant RunConfig::factor_variant() const {
  if (structure == StructureVariant::blr2) return FactorVariant::blr2;
  if (structure == StructureVariant::hss) return FactorVariant::hss;
  return dep ? FactorVariant::h2dep : FactorVariant::h2nodep;
}

void RunConfig::validate() const {
  if (n < 2) throw std::invalid_argument("config: n must be >= 2");
  if (leaf_size < 2) throw std::invalid_argument("config: leaf size must be >= 2");
  if (n < 2 * leaf_size) throw std::invalid_argument("config: need n >= 2 * leaf size");
  if (tol <= 0) throw std::invalid_argument("config: tol must be positive");
  if (cap && *cap < 1) throw std::invalid_argument("config: rank cap must be >= 1");
  if (eta <= 0) throw std::invalid_argument("config: eta must be positive");
  if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  if (geometry != "cube" && geometry != "line" && geometry != "sphere")
    throw std::invalid_argument("config: unknown geometry " + geometry);
  if (dep && structure != StructureVariant::h2)
    throw std::invalid_argument("config: the dep variant requires the h2 structure");
  if (structure != StructureVariant::h2 &&
      effective_admissibility() == AdmissibilityKind::strong)
    throw std::invalid_argument("config: hss/blr2 require weak admissibility");
}

PointCloud make_cloud(const RunConfig& cfg) {
  if (!cfg.points_file.empty()) return read_point_cloud(cfg.points_file);
  if (cfg.geometry == "cube") return generate_uniform_cube(cfg.n, cfg.seed);
  if (cfg.geometry == "line") return generate_line(cfg.n, cfg.seed);
  return generate_sphere_surface(cfg.n, cfg.spheres, cfg.spacing, cfg.seed);
}

KernelSpec make_kernel(const RunConfig& cfg, const PointCloud& cloud) {
  const double reg =
      cfg.reg ? *cfg.reg : default_eta_reg(cloud.domain_diameter(), cloud.size());
  KernelSpec spec =
      cfg.kernel == KernelKind::laplace ? KernelSpec::laplace(reg)
                                        : KernelSpec::yukawa(cfg.alpha_m, reg);
  spec.permittivity_scale = cfg.scale;
  return spec;
}

Pipeline::Pipeline(const RunConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

void Pipeline::build() {
  if (built_) return;
  const double t0 = now_seconds();
  original_ = make_cloud(cfg_);
  kernel_ = make_kernel(cfg_, original_);
  tree_ = std::make_unique<ClusterTreeResult>(build_cluster_tree(original_, cfg_.leaf_size));
  AdmissibilityRule rule{cfg_.effective_admissibility(), cfg_.eta};
  BlockStructure structure = classify_blocks(tree_->tree, rule, cfg_.structure);
  H_ = std::make_unique<HMatrix>(materialize_dense(structure, tree_->tree, tree_->cloud, kernel_,
                                                   cfg_.structure, cfg_.threads));
  built_ = true;
  build_seconds_ = now_seconds() - t0;
}

void Pipeline::factor() {
  build();
  if (factored_) return;
  const double t0 = now_seconds();
  FactorOptions opts;
  opts.variant = cfg_.factor_variant();
  opts.tol = cfg_.tol;
  opts.cap = cfg_.cap;
  opts.threads = cfg_.threads;
  opts.absorb_coupling = cfg_.absorb_coupling;
  factors_ = build_and_factorize(*H_, opts);
  factored_ = true;
  factor_seconds_ = now_seconds() - t0;
}

Matrix Pipeline::solve_rhs(const Matrix& b) const {
  if (!factored_) throw std::logic_error("Pipeline::solve_rhs: factor() first");
  return solve(factors_, b);
}

RunReport Pipeline::report() {
  factor();
  RunReport rep;
  rep.config = cfg_;
  FlopCounter& fc = FlopCounter::instance();
  for (int p = 0; p < static_cast<int>(Phase::count_); ++p) {
    Phase ph = static_cast<Phase>(p);
    rep.phase_flops[phase_name(ph)] = fc.phase_total(ph);
    rep.phase_seconds[phase_name(ph)] = fc.phase_seconds(ph);
  }
  rep.total_flops = fc.total();
  rep.factorization_flops = fc.phase_total(Phase::fills) + fc.phase_total(Phase::factorize);
  rep.kernel_evals = fc.kernel_evals();
  rep.total_seconds = build_seconds_ + factor_seconds_;

  for (int lvl = 1; lvl <= H_->structure.levels; ++lvl) {
    LevelRankStats ls;
    ls.level = lvl;
    ls.dense_blocks = H_->structure.dense_count(lvl);
    ls.lowrank_blocks = H_->structure.far_count(lvl);
    if (lvl < static_cast<int>(factors_.bases.U.size())) {
      int64_t total = 0, count = 0;
      for (const auto& b : factors_.bases.U[lvl]) {
        if (b.dim() == 0 && b.rank() == 0) continue;
        ls.max_rank = std::max(ls.max_rank, b.rank());
        total += b.rank();
        ++count;
      }
      ls.mean_rank = count ? static_cast<double>(total) / count : 0.0;
    }
    rep.levels.push_back(ls);
  }
  if (!factors_.levels.empty()) {
    const int top_lvl = factors_.levels.back().level;
    for (const auto& ls : rep.levels)
      if (ls.level == top_lvl) rep.top_level_max_rank = ls.max_rank;
    for (const auto& ls : rep.levels)
      if (ls.level == H_->structure.levels) rep.max_leaf_rank = ls.max_rank;
  }
  rep.dense_blocks_leaf = H_->structure.dense_count(H_->structure.levels);

  // Stored entries: leaf dense blocks, bases/transfers, skeleton couplings.
  int64_t entries = H_->stored_dense_entries();
  for (int lvl = 1; lvl <= factors_.bases.levels; ++lvl)
    for (const auto& b : factors_.bases.U[lvl]) entries += 2 * (b.Qs.size() + b.Qr.size());
  for (const auto& lf : factors_.levels)
    for (const auto& e : lf.elim) entries += e.pivot.lu.size() + e.urs.size() + e.lsr.size();
  entries += factors_.top.lu.size();
  rep.stored_entries = entries;
  rep.memory_bytes = entries * 8;

  for (double r : factors_.max_fill_residual_rel)
    rep.max_fill_residual_rel = std::max(rep.max_fill_residual_rel, r);

  auto plans = dependency_graph(*H_, cfg_.factor_variant());
  for (const auto& p : plans) rep.dependency_edges += static_cast<int64_t>(p.edges.size());

  if (cfg_.oracle && cfg_.n <= cfg_.oracle_guard) {
    // Reference solution x = 1 with b = A * 1 from the dense path.
    Matrix ones(cfg_.n, 1);
    for (int64_t i = 0; i < cfg_.n; ++i) ones(i, 0) = 1.0;
    Matrix b = matvec_dense_oracle(original_, kernel_, ones, cfg_.oracle_guard);
    Matrix x_ref = dense_solve_oracle(original_, kernel_, b, cfg_.oracle_guard);
    Matrix x = solve_rhs(b);
    rep.solve_rel_error = rel_error(x, x_ref);
  }
  return rep;
}

std::string RunReport::to_json() const {
  json j;
  j["schema"] = schema;
  json cfg;
  cfg["n"] = config.n;
  cfg["leaf_size"] = config.leaf_size;
  cfg["tol"] = config.tol;
  if (config.cap) cfg["cap"] = *config.cap;
  cfg["kernel"] = config.kernel == KernelKind::laplace ? "laplace" : "yukawa";
  if (config.kernel == KernelKind::yukawa) cfg["alpha_m"] = config.alpha_m;
  cfg["reg"] = config.reg ? *config.reg : -1.0;
  cfg["geometry"] = config.geometry;
  if (config.geometry == "sphere") {
    cfg["spheres"] = config.spheres;
    cfg["spacing"] = config.spacing;
  }
  cfg["admissibility"] =
      config.effective_admissibility() == AdmissibilityKind::weak ? "weak" : "strong";
  cfg["eta"] = config.eta;
  cfg["structure"] = structure_name(config.structure);
  cfg["variant"] = config.dep ? "dep" : "nodep";
  cfg["threads"] = config.threads;
  cfg["seed"] = config.seed;
  j["config"] = cfg;

  json walls, flops;
  for (const auto& [name, secs] : phase_seconds) walls[name] = secs;
  for (const auto& [name, n] : phase_flops) flops[name] = n;
  j["wall_seconds"] = walls;
  j["flops"] = flops;
  j["total_flops"] = total_flops;
  j["factorization_flops"] = factorization_flops;
  j["kernel_evals"] = kernel_evals;
  j["total_seconds"] = total_seconds;

  json lvls = json::array();
  for (const auto& ls : levels) {
    json l;
    l["level"] = ls.level;
    l["dense_blocks"] = ls.dense_blocks;
    l["lowrank_blocks"] = ls.lowrank_blocks;
    l["max_rank"] = ls.max_rank;
    l["mean_rank"] = ls.mean_rank;
    lvls.push_back(l);
  }
  j["levels"] = lvls;
  j["top_level_max_rank"] = top_level_max_rank;
  j["max_leaf_rank"] = max_leaf_rank;
  j["dense_blocks_leaf"] = dense_blocks_leaf;
  j["stored_entries"] = stored_entries;
  j["memory_bytes"] = memory_bytes;
  j["max_fill_residual_rel"] = max_fill_residual_rel;
  j["dependency_edges"] = dependency_edges;
  j["solve_rel_error"] = solve_rel_error;
  return j.dump(2);
}

RunReport run_pipeline(const RunConfig& cfg) {
  FlopCounter::instance().reset();
  Pipeline pipe(cfg);
  return pipe.report();
}

std::string partition_plan_json(Pipeline& pipe, int64_t processes) {
  pipe.factor();
  const HMatrix& H = pipe.hmatrix();
  const ULVFactors& f = pipe.factors();
  const int64_t leaves = H.tree.num_leaves();
  if (processes < 1 || (processes & (processes - 1)) != 0 || processes > leaves)
    throw std::invalid_argument("partition_plan: processes must be a power of two <= leaf count");
  int plevels = 0;
  while ((int64_t(1) << plevels) < processes) ++plevels;

  json j;
  j["schema"] = "h2ulv-partition-plan/1";
  j["processes"] = processes;
  j["leaves"] = leaves;
  const int64_t per = leaves / processes;
  json owners = json::array();
  for (int64_t p = 0; p < processes; ++p) {
    json o;
    o["process"] = p;
    o["leaf_rows"] = {p * per, (p + 1) * per};
    o["leaf_cols"] = {p * per, (p + 1) * per};
    owners.push_back(o);
  }
  j["ownership"] = owners;
  j["replication_starts_at_level"] = plevels;

  // Exchanged bytes at each merge under the tree-gather scheme: the skeleton
  // blocks surviving at that level, sized from the measured ranks.
  json exchanges = json::array();
  for (int lvl = std::min<int>(plevels, H.structure.levels); lvl >= 1; --lvl) {
    if (lvl >= static_cast<int>(f.bases.U.size())) continue;
    const auto& Ub = f.bases.U[lvl];
    if (Ub.empty() || (Ub[0].rank() == 0 && Ub[0].dim() == 0 && lvl > f.cutoff_level)) {
    }
    int64_t bytes = 0;
    const int64_t m = int64_t(1) << lvl;
    auto rank_at = [&](int64_t k) -> int64_t {
      if (lvl <= f.cutoff_level) return 0;
      return f.bases.rank(lvl, k);
    };
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t jj : H.structure.level[lvl].near_cols[i]) bytes += rank_at(i) * rank_at(jj) * 8;
      for (int64_t jj : H.structure.level[lvl].far_cols[i]) bytes += rank_at(i) * rank_at(jj) * 8;
    }
    json e;
    e["merge_to_level"] = lvl - 1;
    e["exchanged_bytes"] = processes == 1 ? 0 : bytes;
    exchanges.push_back(e);
  }
  j["exchanges"] = exchanges;
  return j.dump(2);
}

std::string structure_summary_json(const HMatrix& H, const SharedBasisSet* bases) {
  auto sums = summarize_structure(H, bases);
  json j;
  j["schema"] = "h2ulv-structure/1";
  j["variant"] = structure_name(H.variant);
  j["levels"] = json::array();
  for (const auto& s : sums) {
    json l;
    l["level"] = s.level;
    l["dense_blocks"] = s.dense_blocks;
    l["lowrank_blocks"] = s.lowrank_blocks;
    l["max_rank"] = s.max_rank;
    l["mean_rank"] = s.mean_rank;
    l["stored_entries"] = s.stored_entries;
    l["stored_bytes"] = s.stored_entries * 8;
    j["levels"].push_back(l);
  }
  return j.dump(2);
}

}  // namespace h2ulv
