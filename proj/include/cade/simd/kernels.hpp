#pragma once

// Data-parallel inner loops used by the network, the optimizer and the
// registration search. Every kernel has a portable scalar reference and,
// on x86-64, an AVX2+FMA variant. The variant is chosen once at runtime
// from CPUID; `CADE_SIMD=scalar` in the environment forces the reference.

#include <cstddef>
#include <string_view>

namespace cade::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa) noexcept;

/// Row-major C = alpha * op(A) * op(B) + beta * C.
/// op(A) is M x K, op(B) is K x N. lda/ldb/ldc are row strides of the
/// stored (untransposed) matrices.
template <typename T>
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                        T alpha, const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta,
                        T* c, std::size_t ldc);

template <typename T>
struct KernelTable {
  Isa isa;
  GemmFn<T> gemm;
  /// Returns sum x[i]*y[i], accumulated in double.
  double (*dot)(const T* x, const T* y, std::size_t n);
  /// y += a * x
  void (*axpy)(std::size_t n, T a, const T* x, T* y);
  /// y = max(x, 0); may alias.
  void (*relu)(std::size_t n, const T* x, T* y);
  /// dx = y > 0 ? dy : 0, where y is the forward output; dx may alias dy.
  void (*relu_backward)(std::size_t n, const T* y, const T* dy, T* dx);
  /// One Adam step over a flat parameter block. bias corrections are
  /// precomputed by the caller: step = lr / (1 - beta1^t), and
  /// v_scale = 1 / (1 - beta2^t).
  void (*adam)(std::size_t n, T* param, const T* grad, T* m, T* v, T beta1, T beta2, T step,
               T v_scale, T eps);
};

/// Table for the best ISA supported by this CPU (honouring CADE_SIMD).
template <typename T>
const KernelTable<T>& kernels();

/// Table for a specific ISA. Throws if the CPU cannot run it.
template <typename T>
const KernelTable<T>& kernels_for(Isa isa);

bool cpu_supports(Isa isa) noexcept;

Isa active_isa();

// Per-ISA tables; defined in the matching translation units.
namespace scalar {
template <typename T>
const KernelTable<T>& table();
}
#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
template <typename T>
const KernelTable<T>& table();
}
#endif

}  // namespace cade::simd
