// SIMD variants are equivalence-tested against the scalar reference on
// deliberately awkward shapes (tails in every dimension, all transpose
// combinations, beta accumulation).

#include <cstdint>
#include <vector>

#include "cmlab/kernels.hpp"
#include "cmlab/rng.hpp"
#include "doctest.h"

using namespace cmlab;

namespace {

template <typename T>
std::vector<T> random_vec(int64_t n, Rng& rng, double scale = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return v;
}

template <typename T>
double max_abs_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

struct IsaGuard {
  kernels::Isa saved;
  IsaGuard() : saved(kernels::active_isa()) {}
  ~IsaGuard() { kernels::set_isa(saved); }
};

std::vector<kernels::Isa> simd_isas() {
  std::vector<kernels::Isa> v;
  const auto best = kernels::detect_isa();
  if (best >= kernels::Isa::avx2) v.push_back(kernels::Isa::avx2);
  if (best >= kernels::Isa::avx512) v.push_back(kernels::Isa::avx512);
  return v;
}

template <typename T>
void check_gemm_case(bool ta, bool tb, int64_t m, int64_t n, int64_t k,
                     T alpha, T beta, uint64_t seed, double tol) {
  Rng rng(seed);
  const int64_t a_elems = m * k, b_elems = k * n;
  auto a = random_vec<T>(a_elems, rng);
  auto b = random_vec<T>(b_elems, rng);
  auto c0 = random_vec<T>(m * n, rng);
  const int64_t lda = ta ? m : k;
  const int64_t ldb = tb ? k : n;

  IsaGuard guard;
  kernels::set_isa(kernels::Isa::scalar);
  auto ref = c0;
  kernels::gemm<T>(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta,
                   ref.data(), n);
  for (auto isa : simd_isas()) {
    kernels::set_isa(isa);
    auto got = c0;
    kernels::gemm<T>(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb,
                     beta, got.data(), n);
    INFO("isa=", kernels::isa_name(isa), " ta=", ta, " tb=", tb, " m=", m,
         " n=", n, " k=", k);
    CHECK(max_abs_diff(ref, got) < tol * std::sqrt(static_cast<double>(k)));
  }
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("gemm variants match the scalar reference") {
  uint64_t seed = 1;
  struct Dims { int64_t m, n, k; };
  const Dims shapes[] = {{1, 1, 1},   {8, 32, 16},   {33, 33, 32},
                         {7, 17, 5},  {64, 256, 100}, {130, 70, 600},
                         {5, 1, 3},   {1, 40, 9}};
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      for (auto [m, n, k] : shapes) {
        check_gemm_case<float>(ta, tb, m, n, k, 1.0f, 0.0f, seed, 2e-5);
        check_gemm_case<float>(ta, tb, m, n, k, 0.5f, 1.0f, seed + 1, 2e-5);
        check_gemm_case<double>(ta, tb, m, n, k, 1.0, 0.0, seed + 2, 1e-13);
        check_gemm_case<double>(ta, tb, m, n, k, -2.0, 0.75, seed + 3, 1e-13);
        seed += 7;
      }
    }
  }
}

TEST_CASE("gemm beta=0 overwrites garbage including NaN") {
  IsaGuard guard;
  std::vector<float> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  for (auto isa : simd_isas()) {
    kernels::set_isa(isa);
    std::vector<float> c(4, std::numeric_limits<float>::quiet_NaN());
    kernels::gemm<float>(false, false, 2, 2, 2, 1.0f, a.data(), 2, b.data(), 2,
                         0.0f, c.data(), 2);
    CHECK(c[0] == doctest::Approx(19));
    CHECK(c[3] == doctest::Approx(50));
  }
}

TEST_CASE("gemm_batched equals per-slice gemm") {
  Rng rng(11);
  const int64_t G = 5, m = 9, n = 13, k = 7;
  auto a = random_vec<double>(G * m * k, rng);
  auto b = random_vec<double>(G * k * n, rng);
  std::vector<double> got(G * m * n), ref(G * m * n);
  kernels::gemm_batched<double>(false, false, G, m, n, k, 1.0, a.data(),
                                b.data(), 0.0, got.data());
  for (int64_t i = 0; i < G; ++i)
    kernels::gemm<double>(false, false, m, n, k, 1.0, a.data() + i * m * k, k,
                          b.data() + i * k * n, n, 0.0, ref.data() + i * m * n,
                          n);
  CHECK(max_abs_diff(ref, got) == 0.0);  // same code path, same order
}

TEST_CASE("elementwise ops match scalar reference") {
  Rng rng(3);
  const int64_t n = 1031;  // prime: exercises every tail lane
  auto a = random_vec<float>(n, rng);
  auto b = random_vec<float>(n, rng);
  auto ad = random_vec<double>(n, rng);
  auto bd = random_vec<double>(n, rng);

  IsaGuard guard;
  kernels::set_isa(kernels::Isa::scalar);
  std::vector<float> add_ref(n), mul_ref(n), scale_ref(n);
  auto axpy_ref = b;
  kernels::add<float>(n, a.data(), b.data(), add_ref.data());
  kernels::mul<float>(n, a.data(), b.data(), mul_ref.data());
  kernels::scale<float>(n, 1.5f, a.data(), scale_ref.data());
  kernels::axpy<float>(n, -0.25f, a.data(), axpy_ref.data());
  const double sum_ref = kernels::reduce_sum<double>(n, ad.data());
  const double dot_ref = kernels::dot<double>(n, ad.data(), bd.data());

  for (auto isa : simd_isas()) {
    kernels::set_isa(isa);
    std::vector<float> out(n);
    kernels::add<float>(n, a.data(), b.data(), out.data());
    CHECK(max_abs_diff(add_ref, out) == 0.0);
    kernels::mul<float>(n, a.data(), b.data(), out.data());
    CHECK(max_abs_diff(mul_ref, out) == 0.0);
    kernels::scale<float>(n, 1.5f, a.data(), out.data());
    CHECK(max_abs_diff(scale_ref, out) == 0.0);
    auto y = b;
    kernels::axpy<float>(n, -0.25f, a.data(), y.data());
    CHECK(max_abs_diff(axpy_ref, y) == 0.0);
    CHECK(kernels::reduce_sum<double>(n, ad.data()) ==
          doctest::Approx(sum_ref).epsilon(1e-12));
    CHECK(kernels::dot<double>(n, ad.data(), bd.data()) ==
          doctest::Approx(dot_ref).epsilon(1e-12));
  }
}

TEST_CASE("all_finite catches NaN and Inf at any position") {
  IsaGuard guard;
  for (auto isa : simd_isas()) {
    kernels::set_isa(isa);
    for (int64_t n : {1, 7, 16, 33, 100}) {
      std::vector<double> v(n, 0.5);
      CHECK(kernels::all_finite<double>(n, v.data()));
      for (int64_t pos : {int64_t{0}, n / 2, n - 1}) {
        auto w = v;
        w[pos] = std::numeric_limits<double>::quiet_NaN();
        CHECK_FALSE(kernels::all_finite<double>(n, w.data()));
        w[pos] = std::numeric_limits<double>::infinity();
        CHECK_FALSE(kernels::all_finite<double>(n, w.data()));
        w[pos] = -std::numeric_limits<double>::infinity();
        CHECK_FALSE(kernels::all_finite<double>(n, w.data()));
      }
      std::vector<float> f(n, -2.0f);
      CHECK(kernels::all_finite<float>(n, f.data()));
      f[n - 1] = std::numeric_limits<float>::quiet_NaN();
      CHECK_FALSE(kernels::all_finite<float>(n, f.data()));
    }
  }
}

TEST_CASE("adamw variants agree with the scalar reference") {
  Rng rng(17);
  const int64_t n = 203;
  auto p0 = random_vec<double>(n, rng);
  auto g = random_vec<double>(n, rng);
  auto m0 = random_vec<double>(n, rng, 0.1);
  std::vector<double> v0(n);
  for (auto& x : v0) x = std::abs(rng.normal()) * 0.01;

  IsaGuard guard;
  kernels::set_isa(kernels::Isa::scalar);
  auto pr = p0, mr = m0, vr = v0;
  kernels::adamw<double>(n, pr.data(), g.data(), mr.data(), vr.data(), 1e-3,
                         0.9, 0.999, 1e-8, 0.1, 0.19, 0.001);
  for (auto isa : simd_isas()) {
    kernels::set_isa(isa);
    auto ps = p0, ms = m0, vs = v0;
    kernels::adamw<double>(n, ps.data(), g.data(), ms.data(), vs.data(), 1e-3,
                           0.9, 0.999, 1e-8, 0.1, 0.19, 0.001);
    CHECK(max_abs_diff(pr, ps) < 1e-15);
    CHECK(max_abs_diff(mr, ms) < 1e-15);
    CHECK(max_abs_diff(vr, vs) < 1e-15);
  }
}

}  // TEST_SUITE
