#include "h2ulv/kernels.hpp"

#include <cmath>
#include <stdexcept>

#include "h2ulv/flops.hpp"

namespace h2ulv {

KernelSpec KernelSpec::laplace(double eta_reg) {
  KernelSpec s;
  s.kind = KernelKind::laplace;
  s.eta_reg = eta_reg;
  return s;
}

KernelSpec KernelSpec::yukawa(double alpha_m, double eta_reg) {
  KernelSpec s;
  s.kind = KernelKind::yukawa;
  s.alpha_m = alpha_m;
  s.eta_reg = eta_reg;
  return s;
}

double default_eta_reg(double domain_diameter, int64_t n) {
  return 1e-3 * domain_diameter / std::cbrt(static_cast<double>(n));
}

double kernel_eval(const KernelSpec& spec, const std::array<double, 3>& xi,
                   const std::array<double, 3>& xj, double qj) {
  const double dx = xi[0] - xj[0], dy = xi[1] - xj[1], dz = xi[2] - xj[2];
  const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
  const double denom = spec.permittivity_scale * (r + spec.eta_reg);
  if (denom == 0.0) throw std::runtime_error("kernel_eval: singular evaluation (r + eta_reg == 0)");
  if (spec.kind == KernelKind::laplace) return qj / denom;
  return qj * std::exp(-spec.alpha_m * r) / denom;
}

Matrix assemble_block(const KernelSpec& spec, const PointCloud& cloud, IndexRange rows,
                      IndexRange cols) {
  if (rows.size() <= 0 || cols.size() <= 0)
    throw std::invalid_argument("assemble_block: empty range");
  if (rows.begin < 0 || cols.begin < 0 || rows.end > cloud.size() || cols.end > cloud.size())
    throw std::out_of_range("assemble_block: range outside cloud");
  Matrix B(rows.size(), cols.size());
  const bool laplace = spec.kind == KernelKind::laplace;
  for (int64_t j = 0; j < cols.size(); ++j) {
    const auto& xj = cloud.points[cols.begin + j];
    const double qj = cloud.charges[cols.begin + j];
    double* out = B.col(j);
    for (int64_t i = 0; i < rows.size(); ++i) {
      const auto& xi = cloud.points[rows.begin + i];
      const double dx = xi[0] - xj[0], dy = xi[1] - xj[1], dz = xi[2] - xj[2];
      const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
      const double denom = spec.permittivity_scale * (r + spec.eta_reg);
      if (denom == 0.0)
        throw std::runtime_error("assemble_block: singular evaluation (r + eta_reg == 0)");
      out[i] = laplace ? qj / denom : qj * std::exp(-spec.alpha_m * r) / denom;
    }
  }
  FlopCounter::instance().add_kernel_evals(static_cast<uint64_t>(rows.size()) * cols.size());
  // Analytic cost: 9 flops per Laplace entry, 11 per Yukawa entry.
  count_flops(static_cast<uint64_t>(rows.size()) * cols.size() * (laplace ? 9 : 11));
  return B;
}

}  // namespace h2ulv
