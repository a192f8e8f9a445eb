#pragma once

#include <cstddef>
#include <vector>

namespace hscl::hsi {

struct SymmetricEigen {
  std::size_t n = 0;
  std::vector<double> values;   // non-increasing
  std::vector<double> vectors;  // n x n row-major, column j pairs with values[j]
  std::size_t sweeps = 0;
  bool converged = false;
};

// Cyclic Jacobi rotations on a dense symmetric matrix (row-major n x n).
// Stops once every off-diagonal magnitude drops below
// `tolerance * max(1, max |diagonal|)`. Eigenvector signs are fixed so the
// largest-magnitude component of each column is positive.
SymmetricEigen jacobi_eigen(std::vector<double> matrix, std::size_t n, double tolerance = 1e-10,
                            std::size_t max_sweeps = 100);

}  // namespace hscl::hsi
