#pragma once

#include "h2ulv/ulv.hpp"

namespace h2ulv {

// Forward elimination and backward substitution through the ULV factors.
// b and the result are in the caller's original point ordering; multiple
// right-hand sides are processed column by column.
Matrix solve(const ULVFactors& f, const Matrix& b);

// Dense reference paths used as ground truth at guarded sizes.
Matrix assemble_full_matrix(const PointCloud& cloud, const KernelSpec& kernel,
                            int64_t guard = 16384);
Matrix matvec_dense_oracle(const PointCloud& cloud, const KernelSpec& kernel, const Matrix& x,
                           int64_t guard = 16384);
Matrix dense_solve_oracle(const PointCloud& cloud, const KernelSpec& kernel, const Matrix& b,
                          int64_t guard = 16384);

// ASCII vector format: one value per line.
void write_vector(const Matrix& v, const std::string& path);
Matrix read_vector(const std::string& path);

}  // namespace h2ulv
