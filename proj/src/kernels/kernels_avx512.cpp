// AVX-512 kernels (avx512f + dq + bw + vl). Compiled in a separate TU with
// -mavx512*; only reached through the dispatcher after a CPUID check.
//
// GEMM layout: register tiles of MR rows x 2 vector columns. The nn/tn cases
// share one broadcast-FMA microkernel (they differ only in how the broadcast
// scalar is addressed); nt uses a dot-product tile; tt falls back to plain
// loops (it is never on a hot path).

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <vector>

#include "kernels_impl.hpp"

namespace cmlab::kernels::avx512 {

namespace {

// ---------------------------------------------------------------- f32 gemm

// mask for `rem` lanes (0..16)
inline __mmask16 tail_mask16(int64_t rem) {
  if (rem <= 0) return 0;
  if (rem >= 16) return 0xFFFF;
  return static_cast<__mmask16>((1u << rem) - 1u);
}

inline __mmask8 tail_mask8(int64_t rem) {
  if (rem <= 0) return 0;
  if (rem >= 8) return 0xFF;
  return static_cast<__mmask8>((1u << rem) - 1u);
}

// C[i..i+MR, j..j+31] for nn (TA=false) / tn (TA=true).
// FULL = both 16-wide column chunks in range (skips masking on the hot path).
template <bool TA, int MR, bool FULL>
void tile_bcast_f32(int64_t i, int64_t j, int64_t k, float alpha,
                    const float* a, int64_t lda, const float* b, int64_t ldb,
                    float beta, float* c, int64_t ldc, __mmask16 m0,
                    __mmask16 m1) {
  __m512 acc0[MR], acc1[MR];
  for (int r = 0; r < MR; ++r) {
    acc0[r] = _mm512_setzero_ps();
    acc1[r] = _mm512_setzero_ps();
  }
  const float* brow = b + j;
  for (int64_t p = 0; p < k; ++p, brow += ldb) {
    const __m512 b0 = FULL ? _mm512_loadu_ps(brow) : _mm512_maskz_loadu_ps(m0, brow);
    const __m512 b1 = FULL ? _mm512_loadu_ps(brow + 16) : _mm512_maskz_loadu_ps(m1, brow + 16);
    for (int r = 0; r < MR; ++r) {
      const float as = TA ? a[p * lda + (i + r)] : a[(i + r) * lda + p];
      const __m512 av = _mm512_set1_ps(as);
      acc0[r] = _mm512_fmadd_ps(av, b0, acc0[r]);
      acc1[r] = _mm512_fmadd_ps(av, b1, acc1[r]);
    }
  }
  const __m512 valpha = _mm512_set1_ps(alpha);
  for (int r = 0; r < MR; ++r) {
    float* crow = c + (i + r) * ldc + j;
    __m512 r0 = _mm512_mul_ps(valpha, acc0[r]);
    __m512 r1 = _mm512_mul_ps(valpha, acc1[r]);
    if (beta != 0.0f) {
      const __m512 vbeta = _mm512_set1_ps(beta);
      r0 = _mm512_fmadd_ps(vbeta, _mm512_maskz_loadu_ps(m0, crow), r0);
      r1 = _mm512_fmadd_ps(vbeta, _mm512_maskz_loadu_ps(m1, crow + 16), r1);
    }
    _mm512_mask_storeu_ps(crow, m0, r0);
    _mm512_mask_storeu_ps(crow + 16, m1, r1);
  }
}

// nt: C[i,j] = dot(a_row_i, b_row_j); 4x4 tile of dots, vectorized over k.
template <int MR, int NR>
void tile_dot_f32(int64_t i, int64_t j, int64_t k, float alpha, const float* a,
                  int64_t lda, const float* b, int64_t ldb, float beta,
                  float* c, int64_t ldc) {
  __m512 acc[MR][NR];
  for (int r = 0; r < MR; ++r)
    for (int s = 0; s < NR; ++s) acc[r][s] = _mm512_setzero_ps();
  int64_t p = 0;
  for (; p + 16 <= k; p += 16) {
    __m512 av[MR], bv[NR];
    for (int r = 0; r < MR; ++r) av[r] = _mm512_loadu_ps(a + (i + r) * lda + p);
    for (int s = 0; s < NR; ++s) bv[s] = _mm512_loadu_ps(b + (j + s) * ldb + p);
    for (int r = 0; r < MR; ++r)
      for (int s = 0; s < NR; ++s)
        acc[r][s] = _mm512_fmadd_ps(av[r], bv[s], acc[r][s]);
  }
  if (p < k) {
    const __mmask16 mk = tail_mask16(k - p);
    __m512 av[MR], bv[NR];
    for (int r = 0; r < MR; ++r)
      av[r] = _mm512_maskz_loadu_ps(mk, a + (i + r) * lda + p);
    for (int s = 0; s < NR; ++s)
      bv[s] = _mm512_maskz_loadu_ps(mk, b + (j + s) * ldb + p);
    for (int r = 0; r < MR; ++r)
      for (int s = 0; s < NR; ++s)
        acc[r][s] = _mm512_fmadd_ps(av[r], bv[s], acc[r][s]);
  }
  for (int r = 0; r < MR; ++r) {
    for (int s = 0; s < NR; ++s) {
      const float d = alpha * _mm512_reduce_add_ps(acc[r][s]);
      float* out = &c[(i + r) * ldc + (j + s)];
      *out = (beta == 0.0f) ? d : d + beta * *out;
    }
  }
}

template <bool TA, bool FULL>
void gemm_bcast_f32_cols(int64_t j, int64_t m, int64_t k, float alpha,
                         const float* a, int64_t lda, const float* b,
                         int64_t ldb, float beta, float* c, int64_t ldc,
                         __mmask16 m0, __mmask16 m1) {
  int64_t i = 0;
  for (; i + 8 <= m; i += 8)
    tile_bcast_f32<TA, 8, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1);
  switch (m - i) {
    case 7: tile_bcast_f32<TA, 7, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 6: tile_bcast_f32<TA, 6, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 5: tile_bcast_f32<TA, 5, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 4: tile_bcast_f32<TA, 4, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 3: tile_bcast_f32<TA, 3, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 2: tile_bcast_f32<TA, 2, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 1: tile_bcast_f32<TA, 1, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    default: break;
  }
}

template <bool TA>
void gemm_bcast_f32(int64_t m, int64_t n, int64_t k, float alpha,
                    const float* a, int64_t lda, const float* b, int64_t ldb,
                    float beta, float* c, int64_t ldc) {
  for (int64_t j = 0; j < n; j += 32) {
    const int64_t rem = n - j;
    if (rem >= 32) {
      gemm_bcast_f32_cols<TA, true>(j, m, k, alpha, a, lda, b, ldb, beta, c,
                                    ldc, 0xFFFF, 0xFFFF);
    } else {
      gemm_bcast_f32_cols<TA, false>(j, m, k, alpha, a, lda, b, ldb, beta, c,
                                     ldc, tail_mask16(rem), tail_mask16(rem - 16));
    }
  }
}

void gemm_nt_dots_f32(int64_t m, int64_t n, int64_t k, float alpha,
                      const float* a, int64_t lda, const float* b, int64_t ldb,
                      float beta, float* c, int64_t ldc) {
  int64_t i = 0;
  auto col_sweep = [&](auto mr_tag, int64_t row) {
    constexpr int MR = decltype(mr_tag)::value;
    int64_t j = 0;
    for (; j + 4 <= n; j += 4)
      tile_dot_f32<MR, 4>(row, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
    for (; j < n; ++j)
      tile_dot_f32<MR, 1>(row, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
  };
  for (; i + 4 <= m; i += 4)
    col_sweep(std::integral_constant<int, 4>{}, i);
  for (; i < m; ++i)
    col_sweep(std::integral_constant<int, 1>{}, i);
}

// nt via B-transpose pack + the broadcast kernel; the dot-tile form only wins
// when the pack would not be amortized (tiny m) or would not fit in scratch.
constexpr int64_t kMaxPackElems = 1 << 20;

template <typename T>
T* pack_transpose(const T* b, int64_t rows, int64_t cols, int64_t ldb) {
  thread_local std::vector<T> scratch;
  if (static_cast<int64_t>(scratch.size()) < rows * cols)
    scratch.resize(rows * cols);
  T* out = scratch.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t q = 0; q < cols; ++q) out[q * rows + r] = b[r * ldb + q];
  return out;
}

void gemm_nt_f32(int64_t m, int64_t n, int64_t k, float alpha, const float* a,
                 int64_t lda, const float* b, int64_t ldb, float beta, float* c,
                 int64_t ldc) {
  if (m >= 8 && n * k <= kMaxPackElems) {
    const float* bt = pack_transpose(b, n, k, ldb);  // (n x k) -> (k x n)
    gemm_bcast_f32<false>(m, n, k, alpha, a, lda, bt, n, beta, c, ldc);
    return;
  }
  gemm_nt_dots_f32(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// ---------------------------------------------------------------- f64 gemm

template <bool TA, int MR, bool FULL>
void tile_bcast_f64(int64_t i, int64_t j, int64_t k, double alpha,
                    const double* a, int64_t lda, const double* b, int64_t ldb,
                    double beta, double* c, int64_t ldc, __mmask8 m0,
                    __mmask8 m1) {
  __m512d acc0[MR], acc1[MR];
  for (int r = 0; r < MR; ++r) {
    acc0[r] = _mm512_setzero_pd();
    acc1[r] = _mm512_setzero_pd();
  }
  const double* brow = b + j;
  for (int64_t p = 0; p < k; ++p, brow += ldb) {
    const __m512d b0 = FULL ? _mm512_loadu_pd(brow) : _mm512_maskz_loadu_pd(m0, brow);
    const __m512d b1 = FULL ? _mm512_loadu_pd(brow + 8) : _mm512_maskz_loadu_pd(m1, brow + 8);
    for (int r = 0; r < MR; ++r) {
      const double as = TA ? a[p * lda + (i + r)] : a[(i + r) * lda + p];
      const __m512d av = _mm512_set1_pd(as);
      acc0[r] = _mm512_fmadd_pd(av, b0, acc0[r]);
      acc1[r] = _mm512_fmadd_pd(av, b1, acc1[r]);
    }
  }
  const __m512d valpha = _mm512_set1_pd(alpha);
  for (int r = 0; r < MR; ++r) {
    double* crow = c + (i + r) * ldc + j;
    __m512d r0 = _mm512_mul_pd(valpha, acc0[r]);
    __m512d r1 = _mm512_mul_pd(valpha, acc1[r]);
    if (beta != 0.0) {
      const __m512d vbeta = _mm512_set1_pd(beta);
      r0 = _mm512_fmadd_pd(vbeta, _mm512_maskz_loadu_pd(m0, crow), r0);
      r1 = _mm512_fmadd_pd(vbeta, _mm512_maskz_loadu_pd(m1, crow + 8), r1);
    }
    _mm512_mask_storeu_pd(crow, m0, r0);
    _mm512_mask_storeu_pd(crow + 8, m1, r1);
  }
}

template <int MR, int NR>
void tile_dot_f64(int64_t i, int64_t j, int64_t k, double alpha,
                  const double* a, int64_t lda, const double* b, int64_t ldb,
                  double beta, double* c, int64_t ldc) {
  __m512d acc[MR][NR];
  for (int r = 0; r < MR; ++r)
    for (int s = 0; s < NR; ++s) acc[r][s] = _mm512_setzero_pd();
  int64_t p = 0;
  for (; p + 8 <= k; p += 8) {
    __m512d av[MR], bv[NR];
    for (int r = 0; r < MR; ++r) av[r] = _mm512_loadu_pd(a + (i + r) * lda + p);
    for (int s = 0; s < NR; ++s) bv[s] = _mm512_loadu_pd(b + (j + s) * ldb + p);
    for (int r = 0; r < MR; ++r)
      for (int s = 0; s < NR; ++s)
        acc[r][s] = _mm512_fmadd_pd(av[r], bv[s], acc[r][s]);
  }
  if (p < k) {
    const __mmask8 mk = tail_mask8(k - p);
    __m512d av[MR], bv[NR];
    for (int r = 0; r < MR; ++r)
      av[r] = _mm512_maskz_loadu_pd(mk, a + (i + r) * lda + p);
    for (int s = 0; s < NR; ++s)
      bv[s] = _mm512_maskz_loadu_pd(mk, b + (j + s) * ldb + p);
    for (int r = 0; r < MR; ++r)
      for (int s = 0; s < NR; ++s)
        acc[r][s] = _mm512_fmadd_pd(av[r], bv[s], acc[r][s]);
  }
  for (int r = 0; r < MR; ++r) {
    for (int s = 0; s < NR; ++s) {
      const double d = alpha * _mm512_reduce_add_pd(acc[r][s]);
      double* out = &c[(i + r) * ldc + (j + s)];
      *out = (beta == 0.0) ? d : d + beta * *out;
    }
  }
}

template <bool TA, bool FULL>
void gemm_bcast_f64_cols(int64_t j, int64_t m, int64_t k, double alpha,
                         const double* a, int64_t lda, const double* b,
                         int64_t ldb, double beta, double* c, int64_t ldc,
                         __mmask8 m0, __mmask8 m1) {
  int64_t i = 0;
  for (; i + 8 <= m; i += 8)
    tile_bcast_f64<TA, 8, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1);
  switch (m - i) {
    case 7: tile_bcast_f64<TA, 7, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 6: tile_bcast_f64<TA, 6, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 5: tile_bcast_f64<TA, 5, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 4: tile_bcast_f64<TA, 4, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 3: tile_bcast_f64<TA, 3, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 2: tile_bcast_f64<TA, 2, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    case 1: tile_bcast_f64<TA, 1, FULL>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc, m0, m1); break;
    default: break;
  }
}

template <bool TA>
void gemm_bcast_f64(int64_t m, int64_t n, int64_t k, double alpha,
                    const double* a, int64_t lda, const double* b, int64_t ldb,
                    double beta, double* c, int64_t ldc) {
  for (int64_t j = 0; j < n; j += 16) {
    const int64_t rem = n - j;
    if (rem >= 16) {
      gemm_bcast_f64_cols<TA, true>(j, m, k, alpha, a, lda, b, ldb, beta, c,
                                    ldc, 0xFF, 0xFF);
    } else {
      gemm_bcast_f64_cols<TA, false>(j, m, k, alpha, a, lda, b, ldb, beta, c,
                                     ldc, tail_mask8(rem), tail_mask8(rem - 8));
    }
  }
}

void gemm_nt_f64(int64_t m, int64_t n, int64_t k, double alpha, const double* a,
                 int64_t lda, const double* b, int64_t ldb, double beta,
                 double* c, int64_t ldc) {
  if (m >= 8 && n * k <= kMaxPackElems) {
    const double* bt = pack_transpose(b, n, k, ldb);
    gemm_bcast_f64<false>(m, n, k, alpha, a, lda, bt, n, beta, c, ldc);
    return;
  }
  int64_t i = 0;
  auto col_sweep = [&](auto mr_tag, int64_t row) {
    constexpr int MR = decltype(mr_tag)::value;
    int64_t j = 0;
    for (; j + 4 <= n; j += 4)
      tile_dot_f64<MR, 4>(row, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
    for (; j < n; ++j)
      tile_dot_f64<MR, 1>(row, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
  };
  for (; i + 4 <= m; i += 4)
    col_sweep(std::integral_constant<int, 4>{}, i);
  for (; i < m; ++i)
    col_sweep(std::integral_constant<int, 1>{}, i);
}

// tt: cold path, never used by the engine's forward/backward pairs.
template <typename T>
void gemm_tt(int64_t m, int64_t n, int64_t k, T alpha, const T* a, int64_t lda,
             const T* b, int64_t ldb, T beta, T* c, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += a[p * lda + i] * b[j * ldb + p];
      T* out = &c[i * ldc + j];
      *out = (beta == T(0)) ? alpha * acc : alpha * acc + beta * *out;
    }
  }
}

}  // namespace

// tn with a long reduction axis re-streams B from L3 for every row tile;
// block k so the active B slab stays cache-resident.
template <typename T, typename GemmFn>
void tn_kblocked(int64_t m, int64_t n, int64_t k, T alpha, const T* a,
                 int64_t lda, const T* b, int64_t ldb, T beta, T* c,
                 int64_t ldc, GemmFn&& fn) {
  constexpr int64_t kBlock = 512;
  if (k <= kBlock) {
    fn(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
  for (int64_t p = 0; p < k; p += kBlock) {
    const int64_t len = std::min(kBlock, k - p);
    fn(m, n, len, alpha, a + p * lda, lda, b + p * ldb, ldb,
       p == 0 ? beta : T(1), c, ldc);
  }
}

void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, float alpha,
          const float* a, int64_t lda, const float* b, int64_t ldb, float beta,
          float* c, int64_t ldc) {
  if (!ta && !tb) return gemm_bcast_f32<false>(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  if (ta && !tb) return tn_kblocked<float>(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc, gemm_bcast_f32<true>);
  if (!ta && tb) return gemm_nt_f32(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  return gemm_tt<float>(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, int64_t lda, const double* b, int64_t ldb,
          double beta, double* c, int64_t ldc) {
  if (!ta && !tb) return gemm_bcast_f64<false>(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  if (ta && !tb) return tn_kblocked<double>(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc, gemm_bcast_f64<true>);
  if (!ta && tb) return gemm_nt_f64(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  return gemm_tt<double>(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// ------------------------------------------------------------- elementwise

void add(int64_t n, const float* a, const float* b, float* out) {
  int64_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(out + i, _mm512_add_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i)));
  const __mmask16 mk = tail_mask16(n - i);
  if (mk)
    _mm512_mask_storeu_ps(out + i, mk,
                          _mm512_add_ps(_mm512_maskz_loadu_ps(mk, a + i),
                                        _mm512_maskz_loadu_ps(mk, b + i)));
}

void add(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(out + i, _mm512_add_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i)));
  const __mmask8 mk = tail_mask8(n - i);
  if (mk)
    _mm512_mask_storeu_pd(out + i, mk,
                          _mm512_add_pd(_mm512_maskz_loadu_pd(mk, a + i),
                                        _mm512_maskz_loadu_pd(mk, b + i)));
}

void mul(int64_t n, const float* a, const float* b, float* out) {
  int64_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(out + i, _mm512_mul_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i)));
  const __mmask16 mk = tail_mask16(n - i);
  if (mk)
    _mm512_mask_storeu_ps(out + i, mk,
                          _mm512_mul_ps(_mm512_maskz_loadu_ps(mk, a + i),
                                        _mm512_maskz_loadu_ps(mk, b + i)));
}

void mul(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(out + i, _mm512_mul_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i)));
  const __mmask8 mk = tail_mask8(n - i);
  if (mk)
    _mm512_mask_storeu_pd(out + i, mk,
                          _mm512_mul_pd(_mm512_maskz_loadu_pd(mk, a + i),
                                        _mm512_maskz_loadu_pd(mk, b + i)));
}

void scale(int64_t n, float alpha, const float* a, float* out) {
  const __m512 va = _mm512_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(out + i, _mm512_mul_ps(va, _mm512_loadu_ps(a + i)));
  const __mmask16 mk = tail_mask16(n - i);
  if (mk)
    _mm512_mask_storeu_ps(out + i, mk, _mm512_mul_ps(va, _mm512_maskz_loadu_ps(mk, a + i)));
}

void scale(int64_t n, double alpha, const double* a, double* out) {
  const __m512d va = _mm512_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(out + i, _mm512_mul_pd(va, _mm512_loadu_pd(a + i)));
  const __mmask8 mk = tail_mask8(n - i);
  if (mk)
    _mm512_mask_storeu_pd(out + i, mk, _mm512_mul_pd(va, _mm512_maskz_loadu_pd(mk, a + i)));
}

void axpy(int64_t n, float alpha, const float* x, float* y) {
  const __m512 va = _mm512_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_fmadd_ps(va, _mm512_loadu_ps(x + i), _mm512_loadu_ps(y + i)));
  const __mmask16 mk = tail_mask16(n - i);
  if (mk)
    _mm512_mask_storeu_ps(y + i, mk,
                          _mm512_fmadd_ps(va, _mm512_maskz_loadu_ps(mk, x + i),
                                          _mm512_maskz_loadu_ps(mk, y + i)));
}

void axpy(int64_t n, double alpha, const double* x, double* y) {
  const __m512d va = _mm512_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i, _mm512_fmadd_pd(va, _mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i)));
  const __mmask8 mk = tail_mask8(n - i);
  if (mk)
    _mm512_mask_storeu_pd(y + i, mk,
                          _mm512_fmadd_pd(va, _mm512_maskz_loadu_pd(mk, x + i),
                                          _mm512_maskz_loadu_pd(mk, y + i)));
}

float reduce_sum(int64_t n, const float* a) {
  __m512 acc = _mm512_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) acc = _mm512_add_ps(acc, _mm512_loadu_ps(a + i));
  const __mmask16 mk = tail_mask16(n - i);
  if (mk) acc = _mm512_add_ps(acc, _mm512_maskz_loadu_ps(mk, a + i));
  return _mm512_reduce_add_ps(acc);
}

double reduce_sum(int64_t n, const double* a) {
  __m512d acc = _mm512_setzero_pd();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm512_add_pd(acc, _mm512_loadu_pd(a + i));
  const __mmask8 mk = tail_mask8(n - i);
  if (mk) acc = _mm512_add_pd(acc, _mm512_maskz_loadu_pd(mk, a + i));
  return _mm512_reduce_add_pd(acc);
}

float dot(int64_t n, const float* a, const float* b) {
  __m512 acc = _mm512_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16)
    acc = _mm512_fmadd_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i), acc);
  const __mmask16 mk = tail_mask16(n - i);
  if (mk)
    acc = _mm512_fmadd_ps(_mm512_maskz_loadu_ps(mk, a + i),
                          _mm512_maskz_loadu_ps(mk, b + i), acc);
  return _mm512_reduce_add_ps(acc);
}

double dot(int64_t n, const double* a, const double* b) {
  __m512d acc = _mm512_setzero_pd();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm512_fmadd_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i), acc);
  const __mmask8 mk = tail_mask8(n - i);
  if (mk)
    acc = _mm512_fmadd_pd(_mm512_maskz_loadu_pd(mk, a + i),
                          _mm512_maskz_loadu_pd(mk, b + i), acc);
  return _mm512_reduce_add_pd(acc);
}

// finite iff |x| < inf; unordered (NaN) compares must report non-finite.
bool all_finite(int64_t n, const float* a) {
  const __m512 vinf = _mm512_set1_ps(std::numeric_limits<float>::infinity());
  const __m512 sign_clear = _mm512_castsi512_ps(_mm512_set1_epi32(0x7FFFFFFF));
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 ax = _mm512_and_ps(_mm512_loadu_ps(a + i), sign_clear);
    if (_mm512_cmp_ps_mask(ax, vinf, _CMP_NLT_UQ)) return false;
  }
  for (; i < n; ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

bool all_finite(int64_t n, const double* a) {
  const __m512d vinf = _mm512_set1_pd(std::numeric_limits<double>::infinity());
  const __m512d sign_clear =
      _mm512_castsi512_pd(_mm512_set1_epi64(0x7FFFFFFFFFFFFFFFll));
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d ax = _mm512_and_pd(_mm512_loadu_pd(a + i), sign_clear);
    if (_mm512_cmp_pd_mask(ax, vinf, _CMP_NLT_UQ)) return false;
  }
  for (; i < n; ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

void adamw(int64_t n, float* p, const float* g, float* m, float* v, float lr,
           float beta1, float beta2, float eps, float wd, float bc1, float bc2) {
  const __m512 vb1 = _mm512_set1_ps(beta1), vb1c = _mm512_set1_ps(1.0f - beta1);
  const __m512 vb2 = _mm512_set1_ps(beta2), vb2c = _mm512_set1_ps(1.0f - beta2);
  const __m512 vlr = _mm512_set1_ps(lr), veps = _mm512_set1_ps(eps);
  const __m512 vwd = _mm512_set1_ps(wd);
  const __m512 ibc1 = _mm512_set1_ps(1.0f / bc1), ibc2 = _mm512_set1_ps(1.0f / bc2);
  int64_t i = 0;
  auto step = [&](__mmask16 mk) {
    const __m512 gv = _mm512_maskz_loadu_ps(mk, g + i);
    __m512 mv = _mm512_maskz_loadu_ps(mk, m + i);
    __m512 vv = _mm512_maskz_loadu_ps(mk, v + i);
    __m512 pv = _mm512_maskz_loadu_ps(mk, p + i);
    mv = _mm512_fmadd_ps(vb1, mv, _mm512_mul_ps(vb1c, gv));
    vv = _mm512_fmadd_ps(vb2, vv, _mm512_mul_ps(vb2c, _mm512_mul_ps(gv, gv)));
    const __m512 mhat = _mm512_mul_ps(mv, ibc1);
    const __m512 vhat = _mm512_mul_ps(vv, ibc2);
    const __m512 denom = _mm512_add_ps(_mm512_sqrt_ps(vhat), veps);
    __m512 upd = _mm512_div_ps(mhat, denom);
    upd = _mm512_fmadd_ps(vwd, pv, upd);
    pv = _mm512_fnmadd_ps(vlr, upd, pv);
    _mm512_mask_storeu_ps(m + i, mk, mv);
    _mm512_mask_storeu_ps(v + i, mk, vv);
    _mm512_mask_storeu_ps(p + i, mk, pv);
  };
  for (; i + 16 <= n; i += 16) step(0xFFFF);
  const __mmask16 mk = tail_mask16(n - i);
  if (mk) step(mk);
}

void adamw(int64_t n, double* p, const double* g, double* m, double* v,
           double lr, double beta1, double beta2, double eps, double wd,
           double bc1, double bc2) {
  const __m512d vb1 = _mm512_set1_pd(beta1), vb1c = _mm512_set1_pd(1.0 - beta1);
  const __m512d vb2 = _mm512_set1_pd(beta2), vb2c = _mm512_set1_pd(1.0 - beta2);
  const __m512d vlr = _mm512_set1_pd(lr), veps = _mm512_set1_pd(eps);
  const __m512d vwd = _mm512_set1_pd(wd);
  const __m512d ibc1 = _mm512_set1_pd(1.0 / bc1), ibc2 = _mm512_set1_pd(1.0 / bc2);
  int64_t i = 0;
  auto step = [&](__mmask8 mk) {
    const __m512d gv = _mm512_maskz_loadu_pd(mk, g + i);
    __m512d mv = _mm512_maskz_loadu_pd(mk, m + i);
    __m512d vv = _mm512_maskz_loadu_pd(mk, v + i);
    __m512d pv = _mm512_maskz_loadu_pd(mk, p + i);
    mv = _mm512_fmadd_pd(vb1, mv, _mm512_mul_pd(vb1c, gv));
    vv = _mm512_fmadd_pd(vb2, vv, _mm512_mul_pd(vb2c, _mm512_mul_pd(gv, gv)));
    const __m512d mhat = _mm512_mul_pd(mv, ibc1);
    const __m512d vhat = _mm512_mul_pd(vv, ibc2);
    const __m512d denom = _mm512_add_pd(_mm512_sqrt_pd(vhat), veps);
    __m512d upd = _mm512_div_pd(mhat, denom);
    upd = _mm512_fmadd_pd(vwd, pv, upd);
    pv = _mm512_fnmadd_pd(vlr, upd, pv);
    _mm512_mask_storeu_pd(m + i, mk, mv);
    _mm512_mask_storeu_pd(v + i, mk, vv);
    _mm512_mask_storeu_pd(p + i, mk, pv);
  };
  for (; i + 8 <= n; i += 8) step(0xFF);
  const __mmask8 mk = tail_mask8(n - i);
  if (mk) step(mk);
}

}  // namespace cmlab::kernels::avx512

#endif  // x86_64
