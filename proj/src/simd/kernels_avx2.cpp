// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma
// and must only be entered after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "cade/simd/kernels.hpp"

namespace cade::simd::avx2 {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using Reg = __m256;
  static constexpr std::size_t kWidth = 8;
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg set1(float v) { return _mm256_set1_ps(v); }
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_ps(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_ps(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_ps(a, b); }
  static Reg sqrt(Reg a) { return _mm256_sqrt_ps(a); }
  static Reg max(Reg a, Reg b) { return _mm256_max_ps(a, b); }
  static Reg gt_mask(Reg a, Reg b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
  static Reg and_(Reg a, Reg b) { return _mm256_and_ps(a, b); }
};

template <>
struct Vec<double> {
  using Reg = __m256d;
  static constexpr std::size_t kWidth = 4;
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg set1(double v) { return _mm256_set1_pd(v); }
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_pd(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_pd(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_pd(a, b); }
  static Reg sqrt(Reg a) { return _mm256_sqrt_pd(a); }
  static Reg max(Reg a, Reg b) { return _mm256_max_pd(a, b); }
  static Reg gt_mask(Reg a, Reg b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
  static Reg and_(Reg a, Reg b) { return _mm256_and_pd(a, b); }
};

// Register tile: kMr rows of C by two vector widths.
constexpr std::size_t kMr = 6;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 4096;

template <typename T>
constexpr std::size_t kNr = 2 * Vec<T>::kWidth;

template <typename T>
void micro_kernel(std::size_t kc, const T* ap, const T* bp, T* c, std::size_t ldc, std::size_t mr,
                  std::size_t nr) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  typename V::Reg acc[kMr][2];
#pragma GCC unroll 6
  for (std::size_t r = 0; r < kMr; ++r) {
    acc[r][0] = V::zero();
    acc[r][1] = V::zero();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const auto b0 = V::load(bp);
    const auto b1 = V::load(bp + W);
#pragma GCC unroll 6
    for (std::size_t r = 0; r < kMr; ++r) {
      const auto av = V::set1(ap[r]);
      acc[r][0] = V::fmadd(av, b0, acc[r][0]);
      acc[r][1] = V::fmadd(av, b1, acc[r][1]);
    }
    ap += kMr;
    bp += 2 * W;
  }
  if (mr == kMr && nr == 2 * W) {
#pragma GCC unroll 6
    for (std::size_t r = 0; r < kMr; ++r) {
      T* crow = c + r * ldc;
      V::store(crow, V::add(V::load(crow), acc[r][0]));
      V::store(crow + W, V::add(V::load(crow + W), acc[r][1]));
    }
    return;
  }
  alignas(32) T tile[kMr][2 * W];
  for (std::size_t r = 0; r < kMr; ++r) {
    V::store(tile[r], acc[r][0]);
    V::store(tile[r] + W, acc[r][1]);
  }
  for (std::size_t r = 0; r < mr; ++r) {
    for (std::size_t j = 0; j < nr; ++j) c[r * ldc + j] += tile[r][j];
  }
}

template <typename T>
void pack_a(bool trans, const T* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, T alpha, T* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      std::size_t r = 0;
      if (trans) {
        const T* src = a + (p0 + p) * lda + i0 + ir;
        for (; r < rows; ++r) out[r] = alpha * src[r];
      } else {
        const T* src = a + (i0 + ir) * lda + p0 + p;
        for (; r < rows; ++r) out[r] = alpha * src[r * lda];
      }
      for (; r < kMr; ++r) out[r] = T(0);
      out += kMr;
    }
  }
}

template <typename T>
void pack_b(bool trans, const T* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, T* out) {
  constexpr std::size_t nr_full = kNr<T>;
  for (std::size_t jr = 0; jr < nc; jr += nr_full) {
    const std::size_t cols = std::min(nr_full, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      std::size_t j = 0;
      if (trans) {
        const T* src = b + (j0 + jr) * ldb + p0 + p;
        for (; j < cols; ++j) out[j] = src[j * ldb];
      } else {
        const T* src = b + (p0 + p) * ldb + j0 + jr;
        if (cols == nr_full) {
          std::memcpy(out, src, nr_full * sizeof(T));
          j = nr_full;
        } else {
          for (; j < cols; ++j) out[j] = src[j];
        }
      }
      for (; j < nr_full; ++j) out[j] = T(0);
      out += nr_full;
    }
  }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
          std::size_t ldc) {
  if (beta != T(1)) {
    for (std::size_t i = 0; i < m; ++i) {
      T* row = c + i * ldc;
      if (beta == T(0)) {
        std::fill(row, row + n, T(0));
      } else {
        for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
      }
    }
  }
  if (m == 0 || n == 0 || k == 0 || alpha == T(0)) return;

  constexpr std::size_t nr = kNr<T>;
  thread_local std::vector<T> a_pack;
  thread_local std::vector<T> b_pack;
  a_pack.resize(kMc * kKc);
  b_pack.resize(kKc * ((kNc + nr - 1) / nr) * nr);

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(trans_b, b, ldb, pc, kc, jc, nc, b_pack.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(trans_a, a, lda, ic, mc, pc, kc, alpha, a_pack.data());
        for (std::size_t jr = 0; jr < nc; jr += nr) {
          const std::size_t nr_eff = std::min(nr, nc - jr);
          const T* bp = b_pack.data() + jr * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t mr_eff = std::min(kMr, mc - ir);
            micro_kernel<T>(kc, a_pack.data() + ir * kc, bp, c + (ic + ir) * ldc + jc + jr, ldc,
                            mr_eff, nr_eff);
          }
        }
      }
    }
  }
}

double dot_f32(const float* x, const float* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                           _mm256_cvtps_pd(_mm256_castps256_ps128(yv)), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                           _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)), acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) acc += double(x[i]) * double(y[i]);
  return acc;
}

double dot_f64(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy(std::size_t n, T a, const T* x, T* y) {
  using V = Vec<T>;
  const auto av = V::set1(a);
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void relu(std::size_t n, const T* x, T* y) {
  using V = Vec<T>;
  const auto z = V::zero();
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) V::store(y + i, V::max(V::load(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(std::size_t n, const T* y, const T* dy, T* dx) {
  using V = Vec<T>;
  const auto z = V::zero();
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    V::store(dx + i, V::and_(V::gt_mask(V::load(y + i), z), V::load(dy + i)));
  }
  for (; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
void adam(std::size_t n, T* param, const T* grad, T* m, T* v, T beta1, T beta2, T step,
          T v_scale, T eps) {
  using V = Vec<T>;
  const auto b1 = V::set1(beta1);
  const auto b1c = V::set1(T(1) - beta1);
  const auto b2 = V::set1(beta2);
  const auto b2c = V::set1(T(1) - beta2);
  const auto stepv = V::set1(step);
  const auto vs = V::set1(v_scale);
  const auto epsv = V::set1(eps);
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    const auto g = V::load(grad + i);
    const auto mi = V::add(V::mul(b1, V::load(m + i)), V::mul(b1c, g));
    const auto vi = V::add(V::mul(b2, V::load(v + i)), V::mul(V::mul(b2c, g), g));
    V::store(m + i, mi);
    V::store(v + i, vi);
    const auto denom = V::add(V::sqrt(V::mul(vi, vs)), epsv);
    V::store(param + i, V::sub(V::load(param + i), V::div(V::mul(stepv, mi), denom)));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * grad[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * grad[i] * grad[i];
    param[i] -= step * m[i] / (std::sqrt(v[i] * v_scale) + eps);
  }
}

}  // namespace

template <>
const KernelTable<float>& table<float>() {
  static const KernelTable<float> t{Isa::Avx2,   &gemm<float>,          &dot_f32, &axpy<float>,
                                    &relu<float>, &relu_backward<float>, &adam<float>};
  return t;
}

template <>
const KernelTable<double>& table<double>() {
  static const KernelTable<double> t{Isa::Avx2,    &gemm<double>,          &dot_f64, &axpy<double>,
                                     &relu<double>, &relu_backward<double>, &adam<double>};
  return t;
}

}  // namespace cade::simd::avx2
