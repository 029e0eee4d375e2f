#pragma once

#include <cstdint>
#include <string>

#include "h2ulv/geometry.hpp"
#include "h2ulv/matrix.hpp"

namespace h2ulv {

enum class KernelKind { laplace, yukawa };

// Green's function kernels. The 4*pi*eps0 constant is folded into
// `permittivity_scale`; `eta_reg` regularizes the r = 0 diagonal.
struct KernelSpec {
  KernelKind kind = KernelKind::laplace;
  double alpha_m = 0.0;              // Yukawa screening exponent alpha * m
  double permittivity_scale = 4.0 * 3.14159265358979323846;
  double eta_reg = 0.0;

  static KernelSpec laplace(double eta_reg);
  static KernelSpec yukawa(double alpha_m, double eta_reg);
};

// Default regularization: 1e-3 * domain diameter / N^(1/3).
double default_eta_reg(double domain_diameter, int64_t n);

double kernel_eval(const KernelSpec& spec, const std::array<double, 3>& xi,
                   const std::array<double, 3>& xj, double qj);

struct IndexRange {
  int64_t begin = 0;
  int64_t end = 0;
  int64_t size() const { return end - begin; }
};

// Entry (i, j) = eval(x_{row i}, x_{col j}, q_{col j}).
Matrix assemble_block(const KernelSpec& spec, const PointCloud& cloud, IndexRange rows,
                      IndexRange cols);

}  // namespace h2ulv
