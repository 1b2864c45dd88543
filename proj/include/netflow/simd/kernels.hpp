#pragma once

// Data-parallel inner loops shared by the solvers.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2/FMA
// variant compiled in its own translation unit. The active table is picked once
// at first use from the CPU features; NETFLOW_SIMD=scalar|avx2|auto overrides the
// choice. Variants agree up to floating-point reassociation (see the equivalence
// tests), never bitwise.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace netflow::simd {

/// Read-only view of a CSR matrix.
struct CsrView {
  std::span<const std::size_t> row_ptr;  // size rows+1
  std::span<const std::uint32_t> col;
  std::span<const double> val;
};

struct KernelTable {
  std::string_view name;

  double (*dot)(std::span<const double> x, std::span<const double> y);
  double (*sum)(std::span<const double> x);
  /// y += a * x
  void (*axpy)(double a, std::span<const double> x, std::span<double> y);
  /// y = x + b * y
  void (*xpby)(std::span<const double> x, double b, std::span<double> y);
  /// z = x .* y
  void (*hadamard)(std::span<const double> x, std::span<const double> y, std::span<double> z);
  /// y = A x
  void (*spmv)(const CsrView& a, std::span<const double> x, std::span<double> y);
  /// min over i of the smaller eigenvalue of [[a_i, b_i], [b_i, c_i]]
  double (*min_sym2_eigenvalue)(std::span<const double> a, std::span<const double> b,
                                std::span<const double> c);
};

const KernelTable& scalar_kernels() noexcept;

/// nullptr when the binary or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels() noexcept;

/// Table selected for this process.
const KernelTable& active() noexcept;

}  // namespace netflow::simd
