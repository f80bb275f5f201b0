#include <algorithm>
#include <cmath>

#include "cade/simd/kernels.hpp"

namespace cade::simd::scalar {
namespace {

template <typename T>
void scale_rows(std::size_t m, std::size_t n, T beta, T* c, std::size_t ldc) {
  if (beta == T(1)) return;
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T(0)) {
      std::fill(row, row + n, T(0));
    } else {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
          std::size_t ldc) {
  scale_rows(m, n, beta, c, ldc);
  if (m == 0 || n == 0 || k == 0 || alpha == T(0)) return;

  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = alpha * a[i * lda + p];
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const T av = alpha * a[p * lda + i];
        T* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T acc = 0;
        for (std::size_t p = 0; p < k; ++p) {
          const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
          acc += av * b[j * ldb + p];
        }
        c[i * ldc + j] += alpha * acc;
      }
    }
  }
}

template <typename T>
double dot(const T* x, const T* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += double(x[i]) * double(y[i]);
  return acc;
}

template <typename T>
void axpy(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void relu(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(std::size_t n, const T* y, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
void adam(std::size_t n, T* param, const T* grad, T* m, T* v, T beta1, T beta2, T step,
          T v_scale, T eps) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * grad[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * grad[i] * grad[i];
    param[i] -= step * m[i] / (std::sqrt(v[i] * v_scale) + eps);
  }
}

}  // namespace

template <typename T>
const KernelTable<T>& table() {
  static const KernelTable<T> t{Isa::Scalar, &gemm<T>,          &dot<T>, &axpy<T>,
                                &relu<T>,    &relu_backward<T>, &adam<T>};
  return t;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace cade::simd::scalar
