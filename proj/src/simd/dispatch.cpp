#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_internal.hpp"
#include "m3d/simd.hpp"

namespace m3d::simd {

#if !defined(M3D_HAVE_AVX2)
template <>
const KernelTable<float>& avx2_kernels<float>() {
  return scalar_kernels<float>();
}
template <>
const KernelTable<double>& avx2_kernels<double>() {
  return scalar_kernels<double>();
}
bool avx2_compiled() { return false; }
#endif

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("M3D_SIMD")) {
    const std::string_view v(env);
    if (v == "scalar") return Isa::scalar;
  }
  return detected_isa();
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

Isa detected_isa() {
  static const Isa isa =
      avx2_compiled() && cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
  return isa;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2) isa = Isa::scalar;
  active().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& kernels_for(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() == Isa::avx2)
    return avx2_kernels<T>();
  return scalar_kernels<T>();
}

template const KernelTable<float>& kernels_for<float>(Isa);
template const KernelTable<double>& kernels_for<double>(Isa);

}  // namespace m3d::simd
