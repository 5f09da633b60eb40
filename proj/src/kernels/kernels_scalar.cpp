// Reference kernels. Plain loops, no intrinsics; the SIMD variants are
// equivalence-tested against these.

#include <cmath>
#include <cstdint>

#include "kernels_impl.hpp"

namespace cmlab::kernels::scalar {

namespace {

template <typename T>
void gemm_impl(bool ta, bool tb, int64_t m, int64_t n, int64_t k, T alpha,
               const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c,
               int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (int64_t p = 0; p < k; ++p) {
        const T av = ta ? a[p * lda + i] : a[i * lda + p];
        const T bv = tb ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      T* out = &c[i * ldc + j];
      *out = (beta == T(0)) ? alpha * acc : alpha * acc + beta * *out;
    }
  }
}

}  // namespace

#define CMLAB_SCALAR_IMPL(T)                                                   \
  void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, T alpha,        \
            const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c,    \
            int64_t ldc) {                                                     \
    gemm_impl<T>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);        \
  }                                                                            \
  void add(int64_t n, const T* a, const T* b, T* out) {                        \
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];                      \
  }                                                                            \
  void mul(int64_t n, const T* a, const T* b, T* out) {                        \
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];                      \
  }                                                                            \
  void scale(int64_t n, T alpha, const T* a, T* out) {                         \
    for (int64_t i = 0; i < n; ++i) out[i] = alpha * a[i];                     \
  }                                                                            \
  void axpy(int64_t n, T alpha, const T* x, T* y) {                            \
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];                      \
  }                                                                            \
  T reduce_sum(int64_t n, const T* a) {                                        \
    T s = 0;                                                                   \
    for (int64_t i = 0; i < n; ++i) s += a[i];                                 \
    return s;                                                                  \
  }                                                                            \
  T dot(int64_t n, const T* a, const T* b) {                                   \
    T s = 0;                                                                   \
    for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];                          \
    return s;                                                                  \
  }                                                                            \
  bool all_finite(int64_t n, const T* a) {                                     \
    for (int64_t i = 0; i < n; ++i) {                                          \
      if (!std::isfinite(a[i])) return false;                                  \
    }                                                                          \
    return true;                                                               \
  }                                                                            \
  void adamw(int64_t n, T* p, const T* g, T* m, T* v, T lr, T beta1, T beta2,  \
             T eps, T wd, T bc1, T bc2) {                                      \
    for (int64_t i = 0; i < n; ++i) {                                          \
      m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];                             \
      v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];                      \
      const T mhat = m[i] / bc1;                                               \
      const T vhat = v[i] / bc2;                                               \
      p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);               \
    }                                                                          \
  }

CMLAB_SCALAR_IMPL(float)
CMLAB_SCALAR_IMPL(double)

#undef CMLAB_SCALAR_IMPL

}  // namespace cmlab::kernels::scalar
