#include "cmlab/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include "kernels_impl.hpp"

namespace cmlab::kernels {

namespace {

Isa g_isa = Isa::scalar;
std::once_flag g_init_once;

Isa isa_from_env() {
  const char* e = std::getenv("CMLAB_ISA");
  if (!e) return detect_isa();
  if (!std::strcmp(e, "scalar")) return Isa::scalar;
  if (!std::strcmp(e, "avx2")) return Isa::avx2;
  if (!std::strcmp(e, "avx512")) return Isa::avx512;
  throw std::runtime_error(std::string("CMLAB_ISA: unknown value '") + e + "'");
}

void ensure_init() {
  std::call_once(g_init_once, [] { g_isa = isa_from_env(); });
}

}  // namespace

Isa detect_isa() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
      __builtin_cpu_supports("avx512bw") && __builtin_cpu_supports("avx512vl"))
    return Isa::avx512;
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Isa::avx2;
#endif
  return Isa::scalar;
}

Isa active_isa() {
  ensure_init();
  return g_isa;
}

void set_isa(Isa isa) {
  ensure_init();
  if (isa != Isa::scalar && isa > detect_isa())
    throw std::runtime_error("set_isa: " + isa_name(isa) + " not supported by this CPU");
  g_isa = isa;
}

std::string isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::avx512: return "avx512";
  }
  return "?";
}

#if defined(__x86_64__) || defined(_M_X64)
#define CMLAB_DISPATCH(fn, ...)                  \
  do {                                           \
    ensure_init();                               \
    switch (g_isa) {                             \
      case Isa::avx512: return avx512::fn(__VA_ARGS__); \
      case Isa::avx2: return avx2::fn(__VA_ARGS__);     \
      default: return scalar::fn(__VA_ARGS__);   \
    }                                            \
  } while (0)
#else
#define CMLAB_DISPATCH(fn, ...)   \
  do {                            \
    ensure_init();                \
    return scalar::fn(__VA_ARGS__); \
  } while (0)
#endif

template <typename T>
void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, T alpha,
          const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c,
          int64_t ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    // degenerate reduction: C = beta * C
    if (beta == T(0)) {
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) c[i * ldc + j] = 0;
    } else {
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) c[i * ldc + j] *= beta;
    }
    return;
  }
  CMLAB_DISPATCH(gemm, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
void gemm_batched(bool ta, bool tb, int64_t g, int64_t m, int64_t n, int64_t k,
                  T alpha, const T* a, const T* b, T beta, T* c) {
  const int64_t sa = m * k, sb = k * n, sc = m * n;
  const int64_t lda = ta ? m : k;
  const int64_t ldb = tb ? k : n;
  for (int64_t i = 0; i < g; ++i)
    gemm<T>(ta, tb, m, n, k, alpha, a + i * sa, lda, b + i * sb, ldb, beta,
            c + i * sc, n);
}

template <typename T>
void add(int64_t n, const T* a, const T* b, T* out) {
  CMLAB_DISPATCH(add, n, a, b, out);
}
template <typename T>
void mul(int64_t n, const T* a, const T* b, T* out) {
  CMLAB_DISPATCH(mul, n, a, b, out);
}
template <typename T>
void scale(int64_t n, T alpha, const T* a, T* out) {
  CMLAB_DISPATCH(scale, n, alpha, a, out);
}
template <typename T>
void axpy(int64_t n, T alpha, const T* x, T* y) {
  CMLAB_DISPATCH(axpy, n, alpha, x, y);
}
template <typename T>
T reduce_sum(int64_t n, const T* a) {
  CMLAB_DISPATCH(reduce_sum, n, a);
}
template <typename T>
T dot(int64_t n, const T* a, const T* b) {
  CMLAB_DISPATCH(dot, n, a, b);
}
template <typename T>
bool all_finite(int64_t n, const T* a) {
  CMLAB_DISPATCH(all_finite, n, a);
}
template <typename T>
void adamw(int64_t n, T* p, const T* g, T* m, T* v, T lr, T beta1, T beta2,
           T eps, T wd, T bc1, T bc2) {
  CMLAB_DISPATCH(adamw, n, p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2);
}

#undef CMLAB_DISPATCH

#define CMLAB_INSTANTIATE(T)                                                   \
  template void gemm<T>(bool, bool, int64_t, int64_t, int64_t, T, const T*,    \
                        int64_t, const T*, int64_t, T, T*, int64_t);           \
  template void gemm_batched<T>(bool, bool, int64_t, int64_t, int64_t,         \
                                int64_t, T, const T*, const T*, T, T*);        \
  template void add<T>(int64_t, const T*, const T*, T*);                       \
  template void mul<T>(int64_t, const T*, const T*, T*);                       \
  template void scale<T>(int64_t, T, const T*, T*);                            \
  template void axpy<T>(int64_t, T, const T*, T*);                             \
  template T reduce_sum<T>(int64_t, const T*);                                 \
  template T dot<T>(int64_t, const T*, const T*);                              \
  template bool all_finite<T>(int64_t, const T*);                              \
  template void adamw<T>(int64_t, T*, const T*, T*, T*, T, T, T, T, T, T, T);

CMLAB_INSTANTIATE(float)
CMLAB_INSTANTIATE(double)

#undef CMLAB_INSTANTIATE

}  // namespace cmlab::kernels
