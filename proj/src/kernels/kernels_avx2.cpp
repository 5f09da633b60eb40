// AVX2+FMA kernels. Same structure as the AVX-512 variant with 256-bit
// vectors; tails use vmaskmov loads/stores.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <vector>

#include "kernels_impl.hpp"

namespace cmlab::kernels::avx2 {

namespace {

inline __m256i tail_mask_i32(int64_t rem) {
  alignas(32) static const int32_t lut[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                              0,  0,  0,  0,  0,  0,  0,  0};
  const int64_t r = rem < 0 ? 0 : (rem > 8 ? 8 : rem);
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(lut + 8 - r));
}

inline __m256i tail_mask_i64(int64_t rem) {
  alignas(32) static const int64_t lut[8] = {-1, -1, -1, -1, 0, 0, 0, 0};
  const int64_t r = rem < 0 ? 0 : (rem > 4 ? 4 : rem);
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(lut + 4 - r));
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

// C[i..i+MR, j..j+15] for nn (TA=false) / tn (TA=true); two 8-wide columns.
template <bool TA, int MR>
void tile_bcast_f32(int64_t i, int64_t j, int64_t k, float alpha,
                    const float* a, int64_t lda, const float* b, int64_t ldb,
                    float beta, float* c, int64_t ldc, __m256i m0, __m256i m1) {
  __m256 acc0[MR], acc1[MR];
  for (int r = 0; r < MR; ++r) {
    acc0[r] = _mm256_setzero_ps();
    acc1[r] = _mm256_setzero_ps();
  }
  const float* brow = b + j;
  for (int64_t p = 0; p < k; ++p, brow += ldb) {
    const __m256 b0 = _mm256_maskload_ps(brow, m0);
    const __m256 b1 = _mm256_maskload_ps(brow + 8, m1);
    for (int r = 0; r < MR; ++r) {
      const float as = TA ? a[p * lda + (i + r)] : a[(i + r) * lda + p];
      const __m256 av = _mm256_set1_ps(as);
      acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
    }
  }
  const __m256 valpha = _mm256_set1_ps(alpha);
  for (int r = 0; r < MR; ++r) {
    float* crow = c + (i + r) * ldc + j;
    __m256 r0 = _mm256_mul_ps(valpha, acc0[r]);
    __m256 r1 = _mm256_mul_ps(valpha, acc1[r]);
    if (beta != 0.0f) {
      const __m256 vbeta = _mm256_set1_ps(beta);
      r0 = _mm256_fmadd_ps(vbeta, _mm256_maskload_ps(crow, m0), r0);
      r1 = _mm256_fmadd_ps(vbeta, _mm256_maskload_ps(crow + 8, m1), r1);
    }
    _mm256_maskstore_ps(crow, m0, r0);
    _mm256_maskstore_ps(crow + 8, m1, r1);
  }
}

template <bool TA, int MR>
void tile_bcast_f64(int64_t i, int64_t j, int64_t k, double alpha,
                    const double* a, int64_t lda, const double* b, int64_t ldb,
                    double beta, double* c, int64_t ldc, __m256i m0, __m256i m1) {
  __m256d acc0[MR], acc1[MR];
  for (int r = 0; r < MR; ++r) {
    acc0[r] = _mm256_setzero_pd();
    acc1[r] = _mm256_setzero_pd();
  }
  const double* brow = b + j;
  for (int64_t p = 0; p < k; ++p, brow += ldb) {
    const __m256d b0 = _mm256_maskload_pd(brow, m0);
    const __m256d b1 = _mm256_maskload_pd(brow + 4, m1);
    for (int r = 0; r < MR; ++r) {
      const double as = TA ? a[p * lda + (i + r)] : a[(i + r) * lda + p];
      const __m256d av = _mm256_set1_pd(as);
      acc0[r] = _mm256_fmadd_pd(av, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_pd(av, b1, acc1[r]);
    }
  }
  const __m256d valpha = _mm256_set1_pd(alpha);
  for (int r = 0; r < MR; ++r) {
    double* crow = c + (i + r) * ldc + j;
    __m256d r0 = _mm256_mul_pd(valpha, acc0[r]);
    __m256d r1 = _mm256_mul_pd(valpha, acc1[r]);
    if (beta != 0.0) {
      const __m256d vbeta = _mm256_set1_pd(beta);
      r0 = _mm256_fmadd_pd(vbeta, _mm256_maskload_pd(crow, m0), r0);
      r1 = _mm256_fmadd_pd(vbeta, _mm256_maskload_pd(crow + 4, m1), r1);
    }
    _mm256_maskstore_pd(crow, m0, r0);
    _mm256_maskstore_pd(crow + 4, m1, r1);
  }
}

template <typename T, typename TileFn>
void bcast_row_sweep(int64_t m, int64_t j, TileFn&& tile) {
  int64_t i = 0;
  for (; i + 6 <= m; i += 6) tile(std::integral_constant<int, 6>{}, i, j);
  switch (m - i) {
    case 5: tile(std::integral_constant<int, 5>{}, i, j); break;
    case 4: tile(std::integral_constant<int, 4>{}, i, j); break;
    case 3: tile(std::integral_constant<int, 3>{}, i, j); break;
    case 2: tile(std::integral_constant<int, 2>{}, i, j); break;
    case 1: tile(std::integral_constant<int, 1>{}, i, j); break;
    default: break;
  }
}

template <bool TA>
void gemm_bcast_f32(int64_t m, int64_t n, int64_t k, float alpha,
                    const float* a, int64_t lda, const float* b, int64_t ldb,
                    float beta, float* c, int64_t ldc) {
  for (int64_t j = 0; j < n; j += 16) {
    const int64_t rem = n - j;
    const __m256i m0 = tail_mask_i32(rem);
    const __m256i m1 = tail_mask_i32(rem - 8);
    bcast_row_sweep<float>(m, j, [&](auto mr, int64_t i, int64_t jj) {
      tile_bcast_f32<TA, decltype(mr)::value>(i, jj, k, alpha, a, lda, b, ldb,
                                              beta, c, ldc, m0, m1);
    });
  }
}

template <bool TA>
void gemm_bcast_f64(int64_t m, int64_t n, int64_t k, double alpha,
                    const double* a, int64_t lda, const double* b, int64_t ldb,
                    double beta, double* c, int64_t ldc) {
  for (int64_t j = 0; j < n; j += 8) {
    const int64_t rem = n - j;
    const __m256i m0 = tail_mask_i64(rem);
    const __m256i m1 = tail_mask_i64(rem - 4);
    bcast_row_sweep<double>(m, j, [&](auto mr, int64_t i, int64_t jj) {
      tile_bcast_f64<TA, decltype(mr)::value>(i, jj, k, alpha, a, lda, b, ldb,
                                              beta, c, ldc, m0, m1);
    });
  }
}

// nt: dot-product tiles
template <int MR, int NR>
void tile_dot_f32(int64_t i, int64_t j, int64_t k, float alpha, const float* a,
                  int64_t lda, const float* b, int64_t ldb, float beta,
                  float* c, int64_t ldc) {
  __m256 acc[MR][NR];
  for (int r = 0; r < MR; ++r)
    for (int s = 0; s < NR; ++s) acc[r][s] = _mm256_setzero_ps();
  int64_t p = 0;
  for (; p + 8 <= k; p += 8) {
    __m256 av[MR], bv[NR];
    for (int r = 0; r < MR; ++r) av[r] = _mm256_loadu_ps(a + (i + r) * lda + p);
    for (int s = 0; s < NR; ++s) bv[s] = _mm256_loadu_ps(b + (j + s) * ldb + p);
    for (int r = 0; r < MR; ++r)
      for (int s = 0; s < NR; ++s)
        acc[r][s] = _mm256_fmadd_ps(av[r], bv[s], acc[r][s]);
  }
  if (p < k) {
    const __m256i mk = tail_mask_i32(k - p);
    __m256 av[MR], bv[NR];
    for (int r = 0; r < MR; ++r)
      av[r] = _mm256_maskload_ps(a + (i + r) * lda + p, mk);
    for (int s = 0; s < NR; ++s)
      bv[s] = _mm256_maskload_ps(b + (j + s) * ldb + p, mk);
    for (int r = 0; r < MR; ++r)
      for (int s = 0; s < NR; ++s)
        acc[r][s] = _mm256_fmadd_ps(av[r], bv[s], acc[r][s]);
  }
  for (int r = 0; r < MR; ++r) {
    for (int s = 0; s < NR; ++s) {
      const float d = alpha * hsum(acc[r][s]);
      float* out = &c[(i + r) * ldc + (j + s)];
      *out = (beta == 0.0f) ? d : d + beta * *out;
    }
  }
}

template <int MR, int NR>
void tile_dot_f64(int64_t i, int64_t j, int64_t k, double alpha,
                  const double* a, int64_t lda, const double* b, int64_t ldb,
                  double beta, double* c, int64_t ldc) {
  __m256d acc[MR][NR];
  for (int r = 0; r < MR; ++r)
    for (int s = 0; s < NR; ++s) acc[r][s] = _mm256_setzero_pd();
  int64_t p = 0;
  for (; p + 4 <= k; p += 4) {
    __m256d av[MR], bv[NR];
    for (int r = 0; r < MR; ++r) av[r] = _mm256_loadu_pd(a + (i + r) * lda + p);
    for (int s = 0; s < NR; ++s) bv[s] = _mm256_loadu_pd(b + (j + s) * ldb + p);
    for (int r = 0; r < MR; ++r)
      for (int s = 0; s < NR; ++s)
        acc[r][s] = _mm256_fmadd_pd(av[r], bv[s], acc[r][s]);
  }
  if (p < k) {
    const __m256i mk = tail_mask_i64(k - p);
    __m256d av[MR], bv[NR];
    for (int r = 0; r < MR; ++r)
      av[r] = _mm256_maskload_pd(a + (i + r) * lda + p, mk);
    for (int s = 0; s < NR; ++s)
      bv[s] = _mm256_maskload_pd(b + (j + s) * ldb + p, mk);
    for (int r = 0; r < MR; ++r)
      for (int s = 0; s < NR; ++s)
        acc[r][s] = _mm256_fmadd_pd(av[r], bv[s], acc[r][s]);
  }
  for (int r = 0; r < MR; ++r) {
    for (int s = 0; s < NR; ++s) {
      const double d = alpha * hsum(acc[r][s]);
      double* out = &c[(i + r) * ldc + (j + s)];
      *out = (beta == 0.0) ? d : d + beta * *out;
    }
  }
}

template <typename T, typename Tile4, typename Tile1>
void nt_sweep(int64_t m, int64_t n, Tile4&& t44, Tile1&& t11) {
  int64_t i = 0;
  for (; i + 4 <= m; i += 4) {
    int64_t j = 0;
    for (; j + 2 <= n; j += 2) t44(i, j);
    for (; j < n; ++j) t11(4, i, j);
  }
  for (; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) t11(1, i, j);
  }
}

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
    const float* bt = pack_transpose(b, n, k, ldb);
    gemm_bcast_f32<false>(m, n, k, alpha, a, lda, bt, n, beta, c, ldc);
    return;
  }
  nt_sweep<float>(
      m, n,
      [&](int64_t i, int64_t j) {
        tile_dot_f32<4, 2>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
      },
      [&](int mr, int64_t i, int64_t j) {
        if (mr == 4)
          tile_dot_f32<4, 1>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
        else
          tile_dot_f32<1, 1>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
      });
}

void gemm_nt_f64(int64_t m, int64_t n, int64_t k, double alpha, const double* a,
                 int64_t lda, const double* b, int64_t ldb, double beta,
                 double* c, int64_t ldc) {
  if (m >= 8 && n * k <= kMaxPackElems) {
    const double* bt = pack_transpose(b, n, k, ldb);
    gemm_bcast_f64<false>(m, n, k, alpha, a, lda, bt, n, beta, c, ldc);
    return;
  }
  nt_sweep<double>(
      m, n,
      [&](int64_t i, int64_t j) {
        tile_dot_f64<4, 2>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
      },
      [&](int mr, int64_t i, int64_t j) {
        if (mr == 4)
          tile_dot_f64<4, 1>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
        else
          tile_dot_f64<1, 1>(i, j, k, alpha, a, lda, b, ldb, beta, c, ldc);
      });
}

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
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void add(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(int64_t n, const float* a, const float* b, float* out) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(int64_t n, float alpha, const float* a, float* out) {
  const __m256 va = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(a + i)));
  for (; i < n; ++i) out[i] = alpha * a[i];
}

void scale(int64_t n, double alpha, const double* a, double* out) {
  const __m256d va = _mm256_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) out[i] = alpha * a[i];
}

void axpy(int64_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(int64_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

float reduce_sum(int64_t n, const float* a) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
  float s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

double reduce_sum(int64_t n, const double* a) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

float dot(int64_t n, const float* a, const float* b) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  float s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double dot(int64_t n, const double* a, const double* b) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

bool all_finite(int64_t n, const float* a) {
  const __m256 vinf = _mm256_set1_ps(std::numeric_limits<float>::infinity());
  const __m256 sign_clear = _mm256_castsi256_ps(_mm256_set1_epi32(0x7FFFFFFF));
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 ax = _mm256_and_ps(_mm256_loadu_ps(a + i), sign_clear);
    if (_mm256_movemask_ps(_mm256_cmp_ps(ax, vinf, _CMP_NLT_UQ))) return false;
  }
  for (; i < n; ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

bool all_finite(int64_t n, const double* a) {
  const __m256d vinf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  const __m256d sign_clear =
      _mm256_castsi256_pd(_mm256_set1_epi64x(0x7FFFFFFFFFFFFFFFll));
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ax = _mm256_and_pd(_mm256_loadu_pd(a + i), sign_clear);
    if (_mm256_movemask_pd(_mm256_cmp_pd(ax, vinf, _CMP_NLT_UQ))) return false;
  }
  for (; i < n; ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

void adamw(int64_t n, float* p, const float* g, float* m, float* v, float lr,
           float beta1, float beta2, float eps, float wd, float bc1, float bc2) {
  const __m256 vb1 = _mm256_set1_ps(beta1), vb1c = _mm256_set1_ps(1.0f - beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2), vb2c = _mm256_set1_ps(1.0f - beta2);
  const __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
  const __m256 vwd = _mm256_set1_ps(wd);
  const __m256 ibc1 = _mm256_set1_ps(1.0f / bc1), ibc2 = _mm256_set1_ps(1.0f / bc2);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    __m256 pv = _mm256_loadu_ps(p + i);
    mv = _mm256_fmadd_ps(vb1, mv, _mm256_mul_ps(vb1c, gv));
    vv = _mm256_fmadd_ps(vb2, vv, _mm256_mul_ps(vb2c, _mm256_mul_ps(gv, gv)));
    const __m256 mhat = _mm256_mul_ps(mv, ibc1);
    const __m256 vhat = _mm256_mul_ps(vv, ibc2);
    __m256 upd = _mm256_div_ps(mhat, _mm256_add_ps(_mm256_sqrt_ps(vhat), veps));
    upd = _mm256_fmadd_ps(vwd, pv, upd);
    pv = _mm256_fnmadd_ps(vlr, upd, pv);
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    _mm256_storeu_ps(p + i, pv);
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mhat = m[i] * (1.0f / bc1);
    const float vhat = v[i] * (1.0f / bc2);
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
  }
}

void adamw(int64_t n, double* p, const double* g, double* m, double* v,
           double lr, double beta1, double beta2, double eps, double wd,
           double bc1, double bc2) {
  const __m256d vb1 = _mm256_set1_pd(beta1), vb1c = _mm256_set1_pd(1.0 - beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2), vb2c = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
  const __m256d vwd = _mm256_set1_pd(wd);
  const __m256d ibc1 = _mm256_set1_pd(1.0 / bc1), ibc2 = _mm256_set1_pd(1.0 / bc2);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    __m256d pv = _mm256_loadu_pd(p + i);
    mv = _mm256_fmadd_pd(vb1, mv, _mm256_mul_pd(vb1c, gv));
    vv = _mm256_fmadd_pd(vb2, vv, _mm256_mul_pd(vb2c, _mm256_mul_pd(gv, gv)));
    const __m256d mhat = _mm256_mul_pd(mv, ibc1);
    const __m256d vhat = _mm256_mul_pd(vv, ibc2);
    __m256d upd = _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), veps));
    upd = _mm256_fmadd_pd(vwd, pv, upd);
    pv = _mm256_fnmadd_pd(vlr, upd, pv);
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    _mm256_storeu_pd(p + i, pv);
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] * (1.0 / bc1);
    const double vhat = v[i] * (1.0 / bc2);
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
  }
}

}  // namespace cmlab::kernels::avx2

#endif  // x86_64
