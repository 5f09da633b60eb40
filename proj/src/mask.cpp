#include "cmlab/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cmlab {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

void PatchGrid::validate() const {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("patch grid: rows and cols must be >= 1");
}

std::string to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::uniform: return "uniform";
    case MaskStrategy::gaussian: return "gaussian";
    case MaskStrategy::inverse_gaussian: return "inverse-gaussian";
  }
  return "?";
}

MaskStrategy mask_strategy_from_string(const std::string& s) {
  if (s == "uniform") return MaskStrategy::uniform;
  if (s == "gaussian") return MaskStrategy::gaussian;
  if (s == "inverse-gaussian" || s == "inverse_gaussian")
    return MaskStrategy::inverse_gaussian;
  throw std::invalid_argument("unknown mask strategy '" + s + "'");
}

void MaskDistribution::validate() const {
  if (strategy == MaskStrategy::uniform) return;  // Gaussian params unused
  if (!(sigma_x > 0.0) || !std::isfinite(sigma_x) || !(sigma_y > 0.0) ||
      !std::isfinite(sigma_y))
    throw std::invalid_argument("mask distribution: sigmas must be positive finite");
  if (!(rho > -1.0 && rho < 1.0))
    throw std::invalid_argument("mask distribution: rho must be in (-1, 1)");
  if (!std::isfinite(mu_x) || !std::isfinite(mu_y))
    throw std::invalid_argument("mask distribution: means must be finite");
}

void MaskPlan::validate() const {
  if (keep_count < 1 || keep_count > total)
    throw std::invalid_argument("mask plan: keep_count out of range");
  if (static_cast<int32_t>(kept.size()) != keep_count)
    throw std::invalid_argument("mask plan: kept size != keep_count");
  for (size_t i = 0; i < kept.size(); ++i) {
    if (kept[i] < 0 || kept[i] >= total)
      throw std::invalid_argument("mask plan: index out of range");
    if (i > 0 && kept[i] <= kept[i - 1])
      throw std::invalid_argument("mask plan: indices not strictly ascending");
  }
}

MaskPlan MaskPlan::keep_all(int32_t total, uint64_t seed) {
  MaskPlan p;
  p.total = total;
  p.keep_count = total;
  p.seed = seed;
  p.kept.resize(total);
  std::iota(p.kept.begin(), p.kept.end(), 0);
  return p;
}

double log_density_general(double x, double y, const MaskDistribution& dist) {
  if (!std::isfinite(x) || !std::isfinite(y))
    throw std::invalid_argument("density: coordinates must be finite");
  dist.validate();
  const double r2 = 1.0 - dist.rho * dist.rho;
  const double dx = (x - dist.mu_x) / dist.sigma_x;
  const double dy = (y - dist.mu_y) / dist.sigma_y;
  const double quad = (dx * dx + dy * dy - 2.0 * dist.rho * dx * dy) / r2;
  const double log_norm =
      -std::log(kTwoPi * dist.sigma_x * dist.sigma_y * std::sqrt(r2));
  return log_norm - 0.5 * quad;
}

double density_general(double x, double y, const MaskDistribution& dist) {
  return std::exp(log_density_general(x, y, dist));
}

double density_simplified(double x, double y, double sigma_x, double sigma_y) {
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0))
    throw std::invalid_argument("density: sigmas must be positive");
  if (!std::isfinite(x) || !std::isfinite(y))
    throw std::invalid_argument("density: coordinates must be finite");
  const double dx = x / sigma_x, dy = y / sigma_y;
  return std::exp(-0.5 * (dx * dx + dy * dy)) / (kTwoPi * sigma_x * sigma_y);
}

std::vector<double> grid_log_weights(const PatchGrid& grid,
                                     const MaskDistribution& dist) {
  grid.validate();
  dist.validate();
  const int n = grid.total();
  std::vector<double> logw(n, 0.0);
  if (dist.strategy == MaskStrategy::uniform) return logw;
  for (int i = 0; i < n; ++i) {
    double x, y;
    grid.center_of(i, x, y);
    const double lf = log_density_general(x, y, dist);
    logw[i] = dist.strategy == MaskStrategy::gaussian ? lf : -lf;
  }
  return logw;
}

int keep_count_for(int total, double mask_ratio) {
  if (total < 1) throw std::invalid_argument("keep_count: total must be >= 1");
  if (!(mask_ratio >= 0.0) || mask_ratio >= 1.0)
    throw std::invalid_argument("keep_count: mask_ratio must be in [0, 1)");
  const int masked = static_cast<int>(std::round(mask_ratio * total));
  return std::max(1, total - masked);
}

MaskPlan sample_mask(const std::vector<double>& log_weights, int keep_count,
                     Rng& rng, bool deterministic_topk) {
  const int n = static_cast<int>(log_weights.size());
  if (n < 1) throw std::invalid_argument("sample_mask: empty weight list");
  if (keep_count < 1 || keep_count > n)
    throw std::invalid_argument("sample_mask: keep_count " +
                                std::to_string(keep_count) +
                                " out of range [1, " + std::to_string(n) + "]");
  for (double w : log_weights)
    if (!std::isfinite(w))
      throw std::invalid_argument("sample_mask: non-finite log-weight");

  std::vector<double> key(n);
  if (deterministic_topk) {
    for (int i = 0; i < n; ++i) key[i] = log_weights[i];
  } else {
    for (int i = 0; i < n; ++i) key[i] = log_weights[i] + rng.gumbel();
  }

  std::vector<int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](int32_t a, int32_t b) {
    if (key[a] != key[b]) return key[a] > key[b];
    return a < b;  // ties (deterministic mode) keep the lower index
  };
  std::nth_element(order.begin(), order.begin() + (keep_count - 1), order.end(),
                   better);

  MaskPlan plan;
  plan.total = n;
  plan.keep_count = keep_count;
  plan.kept.assign(order.begin(), order.begin() + keep_count);
  std::sort(plan.kept.begin(), plan.kept.end());
  plan.validate();
  return plan;
}

}  // namespace cmlab
