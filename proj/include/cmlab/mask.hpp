// Patch-grid mask sampling: bivariate Gaussian keep-weights over patch
// centers, with uniform / gaussian / inverse-gaussian strategies and
// fixed-size sampling without replacement (Gumbel-top-k).
//
// All weight arithmetic stays in log domain; the sampler never normalizes
// (Gumbel-top-k is invariant to the constant), so extreme sigmas cannot
// underflow.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmlab/rng.hpp"

namespace cmlab {

struct PatchGrid {
  int rows = 0;
  int cols = 0;

  int total() const { return rows * cols; }
  void validate() const;

  // Patch centers on the [-1, 1] square: (x, y) = ((2c+1)/cols - 1,
  // (2r+1)/rows - 1). Centers keep every patch strictly inside the square
  // and put a 1x1 grid at the origin.
  void center_of(int index, double& x, double& y) const {
    const int r = index / cols, c = index % cols;
    x = (2.0 * c + 1.0) / cols - 1.0;
    y = (2.0 * r + 1.0) / rows - 1.0;
  }
};

enum class MaskStrategy { uniform, gaussian, inverse_gaussian };

std::string to_string(MaskStrategy s);
MaskStrategy mask_strategy_from_string(const std::string& s);

struct MaskDistribution {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 0.2;
  double sigma_y = 0.2;
  double rho = 0.0;
  MaskStrategy strategy = MaskStrategy::gaussian;

  void validate() const;

  static MaskDistribution uniform() {
    MaskDistribution d;
    d.strategy = MaskStrategy::uniform;
    return d;
  }
  static MaskDistribution gaussian(double sigma) {
    MaskDistribution d;
    d.sigma_x = d.sigma_y = sigma;
    return d;
  }
  static MaskDistribution inverse_gaussian(double sigma) {
    MaskDistribution d;
    d.sigma_x = d.sigma_y = sigma;
    d.strategy = MaskStrategy::inverse_gaussian;
    return d;
  }
};

// One sampled mask in canonical form: kept patch indices, sorted ascending.
struct MaskPlan {
  std::vector<int32_t> kept;
  int32_t keep_count = 0;
  int32_t total = 0;
  uint64_t seed = 0;

  void validate() const;
  static MaskPlan keep_all(int32_t total, uint64_t seed = 0);
};

// Full bivariate Gaussian density.
double density_general(double x, double y, const MaskDistribution& dist);

// Zero-mean uncorrelated special case:
//   f(x, y) = 1/(2 pi sx sy) * exp(-(x^2/sx^2 + y^2/sy^2) / 2)
double density_simplified(double x, double y, double sigma_x, double sigma_y);

// log f variants (exact, no underflow)
double log_density_general(double x, double y, const MaskDistribution& dist);

// Per-patch log keep-weights in row-major order. uniform -> all zeros;
// gaussian -> log f at patch centers; inverse_gaussian -> negated gaussian
// weights (exact preference-order reversal under the Plackett-Luce model).
std::vector<double> grid_log_weights(const PatchGrid& grid,
                                     const MaskDistribution& dist);

// Patches kept at a given mask ratio: max(1, total - round(ratio * total)),
// rounding half away from zero. Rejects ratio outside [0, 1).
int keep_count_for(int total, double mask_ratio);

// Top keep_count of (log_weight_i + Gumbel_i): sampling without replacement
// with probability proportional to weight (Plackett-Luce). Pure function of
// (log_weights, keep_count, rng state). deterministic_topk disables the
// noise, giving a plain top-k by weight with index tie-break (test mode).
MaskPlan sample_mask(const std::vector<double>& log_weights, int keep_count,
                     Rng& rng, bool deterministic_topk = false);

}  // namespace cmlab
