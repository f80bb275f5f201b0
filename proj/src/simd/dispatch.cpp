#include <cstdlib>
#include <string>

#include "cade/error.hpp"
#include "cade/simd/kernels.hpp"

namespace cade::simd {

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

namespace {

Isa detect() {
  if (const char* forced = std::getenv("CADE_SIMD")) {
    const std::string want(forced);
    if (want == "scalar") return Isa::Scalar;
    if (want == "avx2" && cpu_supports(Isa::Avx2)) return Isa::Avx2;
  }
  return cpu_supports(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

}  // namespace

Isa active_isa() {
  static const Isa isa = detect();
  return isa;
}

template <typename T>
const KernelTable<T>& kernels_for(Isa isa) {
  if (!cpu_supports(isa)) {
    fail(ErrorKind::InvalidInput, "CPU does not support " + std::string(to_string(isa)));
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::Avx2) return avx2::table<T>();
#endif
  return scalar::table<T>();
}

template <typename T>
const KernelTable<T>& kernels() {
  static const KernelTable<T>& table = kernels_for<T>(active_isa());
  return table;
}

template const KernelTable<float>& kernels<float>();
template const KernelTable<double>& kernels<double>();
template const KernelTable<float>& kernels_for<float>(Isa);
template const KernelTable<double>& kernels_for<double>(Isa);

}  // namespace cade::simd
