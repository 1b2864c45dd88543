#include <cstdlib>
#include <iostream>
#include <string_view>

#include "netflow/simd/kernels.hpp"

namespace netflow::simd {
namespace {

const KernelTable& select() noexcept {
  const char* env = std::getenv("NETFLOW_SIMD");
  const std::string_view want = env ? env : "auto";
  if (want == "scalar") return scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return *t;
  if (want == "avx2") std::clog << "netflow: NETFLOW_SIMD=avx2 unavailable, using scalar kernels\n";
  return scalar_kernels();
}

}  // namespace

const KernelTable& active() noexcept {
  static const KernelTable& table = select();
  return table;
}

}  // namespace netflow::simd
