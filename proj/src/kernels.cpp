#include "emff/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace emff::kernels {

namespace detail {
const KernelTable* simd_table();
}

const KernelTable* simd_kernels() {
#if defined(EMFF_HAVE_SIMD_TU)
  static const KernelTable* table = []() -> const KernelTable* {
#if defined(EMFF_SIMD_NEEDS_AVX2)
    if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
#endif
    return detail::simd_table();
  }();
  return table;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() {
  static const KernelTable* chosen = []() -> const KernelTable* {
    if (const char* env = std::getenv("EMFF_KERNEL")) {
      const std::string_view want(env);
      if (want == "scalar") return &scalar_kernels();
      if (want == "simd" && simd_kernels() != nullptr) return simd_kernels();
    }
    return simd_kernels() != nullptr ? simd_kernels() : &scalar_kernels();
  }();
  return *chosen;
}

}  // namespace emff::kernels
