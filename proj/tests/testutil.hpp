// Shared test helpers: the central-finite-difference gradient oracle and
// small tensor factories. The oracle only ever calls the loss as a black-box
// value function, so it stays independent of the backward implementation it
// checks.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cmlab/rng.hpp"
#include "cmlab/tensor.hpp"

namespace testutil {

using cmlab::Rng;
using cmlab::Shape;
using cmlab::Tensor;

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& x : t.data) x = scale * rng.normal();
  return t;
}

struct GradCheckResult {
  double max_err = 0.0;
  std::string worst;  // "input{i}[j]"
};

// loss_fn evaluates the scalar loss from input values only (it must build a
// fresh graph internally). analytic[i] is dLoss/dInput_i as computed by the
// engine. Error metric: |analytic - numeric| / max(1, |numeric|).
inline GradCheckResult grad_check(
    const std::function<double(const std::vector<Tensor<double>>&)>& loss_fn,
    std::vector<Tensor<double>> inputs,
    const std::vector<Tensor<double>>& analytic, double h = 1e-5) {
  GradCheckResult res;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (int64_t j = 0; j < inputs[i].numel(); ++j) {
      const double keep = inputs[i].data[j];
      inputs[i].data[j] = keep + h;
      const double up = loss_fn(inputs);
      inputs[i].data[j] = keep - h;
      const double dn = loss_fn(inputs);
      inputs[i].data[j] = keep;
      const double numeric = (up - dn) / (2.0 * h);
      const double err = std::abs(analytic[i].data[j] - numeric) /
                         std::max(1.0, std::abs(numeric));
      if (err > res.max_err) {
        res.max_err = err;
        res.worst = "input" + std::to_string(i) + "[" + std::to_string(j) + "]";
      }
    }
  }
  return res;
}

// Same oracle, but only a deterministic sample of coordinates per input
// tensor (keeps unit tests fast; the acceptance suite sweeps every one).
inline GradCheckResult grad_check_sampled(
    const std::function<double(const std::vector<Tensor<double>>&)>& loss_fn,
    std::vector<Tensor<double>> inputs,
    const std::vector<Tensor<double>>& analytic, int per_tensor,
    uint64_t seed = 7, double h = 1e-5) {
  GradCheckResult res;
  Rng rng(seed);
  for (size_t i = 0; i < inputs.size(); ++i) {
    const int64_t n = inputs[i].numel();
    for (int s = 0; s < per_tensor; ++s) {
      const int64_t j = static_cast<int64_t>(rng.below(n));
      const double keep = inputs[i].data[j];
      inputs[i].data[j] = keep + h;
      const double up = loss_fn(inputs);
      inputs[i].data[j] = keep - h;
      const double dn = loss_fn(inputs);
      inputs[i].data[j] = keep;
      const double numeric = (up - dn) / (2.0 * h);
      const double err = std::abs(analytic[i].data[j] - numeric) /
                         std::max(1.0, std::abs(numeric));
      if (err > res.max_err) {
        res.max_err = err;
        res.worst = "input" + std::to_string(i) + "[" + std::to_string(j) + "]";
      }
    }
  }
  return res;
}

}  // namespace testutil
