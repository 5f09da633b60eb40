// Internal: per-ISA entry points wired up by the dispatcher. Each variant
// namespace implements the same set of functions; signatures mirror the
// public API in cmlab/kernels.hpp.

#pragma once

#include <cstdint>

namespace cmlab::kernels {

#define CMLAB_KERNEL_DECLS(T)                                                  \
  void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, T alpha,        \
            const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c,    \
            int64_t ldc);                                                      \
  void add(int64_t n, const T* a, const T* b, T* out);                         \
  void mul(int64_t n, const T* a, const T* b, T* out);                         \
  void scale(int64_t n, T alpha, const T* a, T* out);                          \
  void axpy(int64_t n, T alpha, const T* x, T* y);                             \
  T reduce_sum(int64_t n, const T* a);                                         \
  T dot(int64_t n, const T* a, const T* b);                                    \
  bool all_finite(int64_t n, const T* a);                                      \
  void adamw(int64_t n, T* p, const T* g, T* m, T* v, T lr, T beta1, T beta2,  \
             T eps, T wd, T bc1, T bc2);

namespace scalar {
CMLAB_KERNEL_DECLS(float)
CMLAB_KERNEL_DECLS(double)
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
CMLAB_KERNEL_DECLS(float)
CMLAB_KERNEL_DECLS(double)
}  // namespace avx2
namespace avx512 {
CMLAB_KERNEL_DECLS(float)
CMLAB_KERNEL_DECLS(double)
}  // namespace avx512
#endif

#undef CMLAB_KERNEL_DECLS

}  // namespace cmlab::kernels
