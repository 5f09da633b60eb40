// Data-parallel inner loops used by the tensor engine: GEMM, batched GEMM,
// elementwise vector ops, reductions, and the fused AdamW update.
//
// Every operation has a scalar reference implementation plus AVX2 and AVX-512
// variants. The active instruction set is picked once at startup from CPUID
// and can be forced (tests, debugging) via set_isa() or the CMLAB_ISA
// environment variable ("scalar", "avx2", "avx512").
//
// All variants produce the same results up to floating-point summation order;
// the scalar path is the reference the SIMD paths are equivalence-tested
// against. For a fixed build and a fixed ISA the results are bit-reproducible:
// nothing here depends on thread count or timing.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace cmlab::kernels {

enum class Isa { scalar = 0, avx2 = 1, avx512 = 2 };

// Highest ISA the CPU supports.
Isa detect_isa();
// Currently active ISA (after env override / set_isa).
Isa active_isa();
void set_isa(Isa isa);
std::string isa_name(Isa isa);

// C (m x n) = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is A (m x k) when !ta, else A is stored (k x m) and used transposed.
// op(B) is B (k x n) when !tb, else B is stored (n x k) and used transposed.
// When beta == 0, C is not read.
template <typename T>
void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, T alpha,
          const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c,
          int64_t ldc);

// Batched GEMM over g independent problems laid out contiguously:
// a has g blocks of (m x k) (or (k x m) if ta), similarly b and c.
template <typename T>
void gemm_batched(bool ta, bool tb, int64_t g, int64_t m, int64_t n, int64_t k,
                  T alpha, const T* a, const T* b, T beta, T* c);

// out[i] = a[i] + b[i]
template <typename T>
void add(int64_t n, const T* a, const T* b, T* out);
// out[i] = a[i] * b[i]
template <typename T>
void mul(int64_t n, const T* a, const T* b, T* out);
// out[i] = alpha * a[i]
template <typename T>
void scale(int64_t n, T alpha, const T* a, T* out);
// y[i] += alpha * x[i]
template <typename T>
void axpy(int64_t n, T alpha, const T* x, T* y);

template <typename T>
T reduce_sum(int64_t n, const T* a);
template <typename T>
T dot(int64_t n, const T* a, const T* b);

// True iff every element is finite (no NaN, no +-Inf).
template <typename T>
bool all_finite(int64_t n, const T* a);

// Decoupled-weight-decay Adam step on one parameter buffer.
//   m = beta1*m + (1-beta1)*g        v = beta2*v + (1-beta2)*g^2
//   p -= lr * ( (m/bc1) / (sqrt(v/bc2) + eps) + wd * p )
// bc1/bc2 are the bias corrections 1-beta^t, computed by the caller.
template <typename T>
void adamw(int64_t n, T* p, const T* g, T* m, T* v, T lr, T beta1, T beta2,
           T eps, T wd, T bc1, T bc2);

}  // namespace cmlab::kernels
