#include "netflow/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace netflow::simd {
namespace {

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void xpby(std::span<const double> x, double b, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + b * y[i];
}

void hadamard(std::span<const double> x, std::span<const double> y, std::span<double> z) {
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] * y[i];
}

void spmv(const CsrView& a, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = a.row_ptr.size() - 1;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

double min_sym2_eigenvalue(std::span<const double> a, std::span<const double> b,
                           std::span<const double> c) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double mean = 0.5 * (a[i] + c[i]);
    const double half = 0.5 * (a[i] - c[i]);
    const double rad = std::sqrt(half * half + b[i] * b[i]);
    m = std::min(m, mean - rad);
  }
  return m;
}

constexpr KernelTable kTable{
    "scalar", &dot, &sum, &axpy, &xpby, &hadamard, &spmv, &min_sym2_eigenvalue,
};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kTable; }

}  // namespace netflow::simd
