#include "netflow/simd/kernels.hpp"

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#define NETFLOW_HAVE_AVX2_TU 1
#include <immintrin.h>
#endif

#ifdef NETFLOW_HAVE_AVX2_TU

#include <algorithm>
#include <cmath>
#include <limits>

// Only the functions below carry the avx2/fma target attribute; the rest of the
// translation unit stays baseline so no AVX code leaks into shared inline symbols.
#define NETFLOW_AVX2 __attribute__((target("avx2,fma")))

namespace netflow::simd {
namespace {

NETFLOW_AVX2 double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

NETFLOW_AVX2 double dot_raw(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

NETFLOW_AVX2 double sum_raw(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

NETFLOW_AVX2 void axpy_raw(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

NETFLOW_AVX2 void xpby_raw(const double* x, double b, double* y, std::size_t n) {
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vb, _mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = x[i] + b * y[i];
}

NETFLOW_AVX2 void hadamard_raw(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

NETFLOW_AVX2 void spmv_raw(const std::size_t* row_ptr, std::size_t rows, const std::uint32_t* col,
                           const double* val, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t k = row_ptr[r];
    const std::size_t end = row_ptr[r + 1];
    __m256d acc = _mm256_setzero_pd();
    for (; k + 4 <= end; k += 4) {
      const __m128i idx = _mm_loadu_si128(reinterpret_cast<const __m128i*>(col + k));
      const __m256d xv = _mm256_i32gather_pd(x, idx, 8);
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(val + k), xv, acc);
    }
    double s = hsum(acc);
    for (; k < end; ++k) s += val[k] * x[col[k]];
    y[r] = s;
  }
}

NETFLOW_AVX2 double min_eig_raw(const double* a, const double* b, const double* c, std::size_t n) {
  const __m256d half = _mm256_set1_pd(0.5);
  __m256d m = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a + i);
    const __m256d vb = _mm256_loadu_pd(b + i);
    const __m256d vc = _mm256_loadu_pd(c + i);
    const __m256d mean = _mm256_mul_pd(half, _mm256_add_pd(va, vc));
    const __m256d hd = _mm256_mul_pd(half, _mm256_sub_pd(va, vc));
    const __m256d rad = _mm256_sqrt_pd(_mm256_fmadd_pd(hd, hd, _mm256_mul_pd(vb, vb)));
    m = _mm256_min_pd(m, _mm256_sub_pd(mean, rad));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, m);
  double out = std::min(std::min(lanes[0], lanes[1]), std::min(lanes[2], lanes[3]));
  for (; i < n; ++i) {
    const double mean = 0.5 * (a[i] + c[i]);
    const double hd = 0.5 * (a[i] - c[i]);
    out = std::min(out, mean - std::sqrt(hd * hd + b[i] * b[i]));
  }
  return out;
}

// Baseline-ISA adapters: unpack spans here, call into the target-attributed bodies.

double dot(std::span<const double> x, std::span<const double> y) {
  return dot_raw(x.data(), y.data(), x.size());
}
double sum(std::span<const double> x) { return sum_raw(x.data(), x.size()); }
void axpy(double a, std::span<const double> x, std::span<double> y) {
  axpy_raw(a, x.data(), y.data(), x.size());
}
void xpby(std::span<const double> x, double b, std::span<double> y) {
  xpby_raw(x.data(), b, y.data(), x.size());
}
void hadamard(std::span<const double> x, std::span<const double> y, std::span<double> z) {
  hadamard_raw(x.data(), y.data(), z.data(), x.size());
}
void spmv(const CsrView& a, std::span<const double> x, std::span<double> y) {
  spmv_raw(a.row_ptr.data(), a.row_ptr.size() - 1, a.col.data(), a.val.data(), x.data(), y.data());
}
double min_sym2_eigenvalue(std::span<const double> a, std::span<const double> b,
                           std::span<const double> c) {
  return min_eig_raw(a.data(), b.data(), c.data(), a.size());
}

constexpr KernelTable kTable{
    "avx2", &dot, &sum, &axpy, &xpby, &hadamard, &spmv, &min_sym2_eigenvalue,
};

}  // namespace

const KernelTable* avx2_kernels() noexcept {
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kTable : nullptr;
}

}  // namespace netflow::simd

#else

namespace netflow::simd {
const KernelTable* avx2_kernels() noexcept { return nullptr; }
}  // namespace netflow::simd

#endif
