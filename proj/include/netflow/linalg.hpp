#pragma once

// Sparse symmetric matrices and the solvers used for graph Laplacians and P1
// stiffness systems, including the singular (constant-kernel) case.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "netflow/simd/kernels.hpp"

namespace netflow::linalg {

struct Triplet {
  std::uint32_t row;
  std::uint32_t col;
  double value;
};

/// Compressed sparse row matrix, square.
class CsrMatrix {
 public:
  CsrMatrix() = default;

  /// Duplicates are summed in input order, so the result does not depend on how
  /// the triplet list was produced as long as its order is fixed.
  static CsrMatrix from_triplets(std::size_t n, std::span<const Triplet> triplets);

  std::size_t rows() const noexcept { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  std::size_t nonzeros() const noexcept { return val_.size(); }

  /// y = A x using the active SIMD kernel table.
  void multiply(std::span<const double> x, std::span<double> y) const;
  void multiply(std::span<const double> x, std::span<double> y,
                const simd::KernelTable& kernels) const;

  double coeff(std::size_t r, std::size_t c) const;
  std::vector<double> diagonal() const;
  std::vector<double> row_sums() const;

  simd::CsrView view() const noexcept { return {row_ptr_, col_, val_}; }
  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::uint32_t> col() const noexcept { return col_; }
  std::span<const double> values() const noexcept { return val_; }

 private:
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> col_;
  std::vector<double> val_;
};

struct CgOptions {
  double rel_tol = 1e-13;
  std::size_t max_iterations = 0;  // 0: 20 n + 200
  /// Solve on the orthogonal complement of the constant vector (graph Laplacians,
  /// Neumann stiffness). The right-hand side must already sum to zero.
  bool deflate_constants = false;
};

struct CgReport {
  std::size_t iterations = 0;
  double residual = 0.0;  // ||b - A x||_2, recomputed at exit
  bool converged = false;
};

/// Jacobi-preconditioned conjugate gradients. `x` holds the initial guess on entry.
CgReport conjugate_gradient(const CsrMatrix& a, std::span<const double> b, std::span<double> x,
                            const CgOptions& options = {});

enum class Gauge {
  RankOne,  // solve (A + s 1 1^T) x = b, which forces sum(x) = 0
  Pin,      // fix x_0 = 0, solve the reduced system
};

/// Direct solve of a symmetric positive semidefinite system whose kernel is the
/// constant vector. Throws SingularSystem when the factorization detects a larger kernel.
std::vector<double> solve_constant_kernel_direct(const CsrMatrix& a, std::span<const double> b,
                                                 Gauge gauge);

/// Sparse LDL^T solve of the same class of systems with x_0 pinned, for Newton steps.
std::vector<double> solve_constant_kernel_sparse(const CsrMatrix& a, std::span<const double> b);

/// Direct solve of a symmetric positive definite system.
std::vector<double> solve_spd_direct(const CsrMatrix& a, std::span<const double> b);

double norm2(std::span<const double> x);

/// x -= (sum_i w_i x_i / sum_i w_i); unit weights when `w` is empty.
void remove_weighted_mean(std::span<double> x, std::span<const double> w = {});

}  // namespace netflow::linalg
