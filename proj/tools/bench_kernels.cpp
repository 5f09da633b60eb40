// Microbenchmark for the GEMM kernels across ISA variants, on the shapes the
// training loop actually produces. Not part of the test suite.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "cmlab/kernels.hpp"
#include "cmlab/rng.hpp"

using namespace cmlab;

namespace {

struct Case {
  const char* name;
  bool ta, tb;
  int64_t m, n, k;
  int64_t batch = 1;  // repeated calls per timed iteration (bmm-style)
};

template <typename T>
double bench_case(const Case& c, int reps) {
  Rng rng(42);
  const int64_t am = c.ta ? c.k : c.m, ak = c.ta ? c.m : c.k;
  const int64_t bk = c.tb ? c.n : c.k, bn = c.tb ? c.k : c.n;
  std::vector<T> a(c.batch * am * ak), b(c.batch * bk * bn), out(c.batch * c.m * c.n);
  for (auto& x : a) x = static_cast<T>(rng.normal());
  for (auto& x : b) x = static_cast<T>(rng.normal());

  auto run = [&] {
    for (int64_t g = 0; g < c.batch; ++g)
      kernels::gemm<T>(c.ta, c.tb, c.m, c.n, c.k, T(1), a.data() + g * am * ak,
                       ak, b.data() + g * bk * bn, bn, T(0),
                       out.data() + g * c.m * c.n, c.n);
  };
  run();  // warmup
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) run();
  const auto t1 = std::chrono::steady_clock::now();
  const double sec = std::chrono::duration<double>(t1 - t0).count();
  const double flops = 2.0 * c.m * c.n * c.k * c.batch * reps;
  return flops / sec / 1e9;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) kernels::set_isa(kernels::Isa(std::stoi(argv[1])));
  std::printf("isa: %s\n", kernels::isa_name(kernels::active_isa()).c_str());

  const std::vector<Case> cases = {
      {"patch_embed nn", false, false, 4224, 64, 192},
      {"qkv nn", false, false, 4224, 64, 64},
      {"mlp_up nn", false, false, 4224, 256, 64},
      {"mlp_down nn", false, false, 4224, 64, 256},
      {"attn_scores nt", false, true, 33, 33, 32, 256},
      {"attn_ctx nn", false, false, 33, 32, 33, 256},
      {"dW tn", true, false, 64, 256, 4224},
      {"dX nt", false, true, 4224, 64, 256},
      {"logits nt", false, true, 128, 128, 32},
      {"big square nn", false, false, 512, 512, 512},
  };
  std::printf("%-18s %10s %10s\n", "case", "f32 GF/s", "f64 GF/s");
  for (const auto& c : cases) {
    const double work = 2.0 * c.m * c.n * c.k * c.batch;
    const int reps = std::max(1, static_cast<int>(3e9 / work));
    std::printf("%-18s %10.2f %10.2f\n", c.name, bench_case<float>(c, reps),
                bench_case<double>(c, reps));
  }
  return 0;
}
