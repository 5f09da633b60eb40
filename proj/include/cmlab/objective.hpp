// Temperature-scaled symmetric InfoNCE over an image-text batch.
//
// Two routes exist on purpose: info_nce_value() is a direct log-sum-exp
// evaluation used by evaluation code and as an oracle in tests, while
// info_nce_loss() builds the differentiable graph the trainer uses. They must
// agree to near machine precision (tested).

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cmlab/graph.hpp"
#include "cmlab/tensor.hpp"

namespace cmlab {

template <typename T>
struct SimilarityBatch {
  Tensor<T> image_embeds;  // B x D, unit rows
  Tensor<T> text_embeds;   // B x D, unit rows
  double temperature = 1.0;
};

namespace detail {

template <typename T>
void check_similarity_batch(const SimilarityBatch<T>& b) {
  if (b.image_embeds.rank() != 2 || b.text_embeds.rank() != 2 ||
      b.image_embeds.shape != b.text_embeds.shape)
    throw std::invalid_argument("info_nce: embeddings must share a BxD shape");
  if (b.image_embeds.dim(0) < 1)
    throw std::invalid_argument("info_nce: batch must be non-empty");
  if (!(b.temperature > 0.0) || !std::isfinite(b.temperature))
    throw std::invalid_argument("info_nce: temperature must be positive");
  const int64_t bs = b.image_embeds.dim(0), d = b.image_embeds.dim(1);
  for (const Tensor<T>* m : {&b.image_embeds, &b.text_embeds}) {
    if (!kernels::all_finite(m->numel(), m->data.data()))
      throw std::invalid_argument("info_nce: non-finite embeddings");
    for (int64_t r = 0; r < bs; ++r) {
      const T* row = m->data.data() + r * d;
      const double n = std::sqrt(static_cast<double>(kernels::dot<T>(d, row, row)));
      if (std::abs(n - 1.0) > 1e-10)
        throw std::invalid_argument("info_nce: embedding rows must be unit norm");
    }
  }
}

// mean over rows of -log softmax(logits/tau)[i, i], computed with max-shift
inline double nce_direction(const std::vector<double>& logits, int64_t bs) {
  double total = 0;
  for (int64_t i = 0; i < bs; ++i) {
    const double* row = logits.data() + i * bs;
    double mx = row[0];
    for (int64_t j = 1; j < bs; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (int64_t j = 0; j < bs; ++j) denom += std::exp(row[j] - mx);
    total += std::log(denom) + mx - row[i];
  }
  return total / static_cast<double>(bs);
}

}  // namespace detail

// Scalar loss, no graph: 0.5 * (L_img->txt + L_txt->img), each direction the
// mean over the batch of -log( exp(sim_ii/tau) / sum_j exp(sim_ij/tau) ).
template <typename T>
double info_nce_value(const SimilarityBatch<T>& batch) {
  detail::check_similarity_batch(batch);
  const int64_t bs = batch.image_embeds.dim(0), d = batch.image_embeds.dim(1);
  std::vector<double> logits(bs * bs), logits_t(bs * bs);
  for (int64_t i = 0; i < bs; ++i)
    for (int64_t j = 0; j < bs; ++j) {
      double s = 0;
      for (int64_t k = 0; k < d; ++k)
        s += static_cast<double>(batch.image_embeds.data[i * d + k]) *
             static_cast<double>(batch.text_embeds.data[j * d + k]);
      logits[i * bs + j] = s / batch.temperature;
      logits_t[j * bs + i] = s / batch.temperature;
    }
  return 0.5 * (detail::nce_direction(logits, bs) +
                detail::nce_direction(logits_t, bs));
}

// Graph route used in training: logits = scale * (img @ txt^T) where scale is
// a graph scalar (1/tau, typically the clamped exp of log_temperature).
template <typename T>
Var info_nce_loss(Graph<T>& g, Var image_embeds, Var text_embeds,
                  Var scale_var) {
  const auto& iv = g.value(image_embeds);
  detail::require(iv.rank() == 2, "info_nce", "image embeddings must be rank-2");
  detail::require(g.value(text_embeds).shape == iv.shape, "info_nce",
                  "image/text embedding shapes disagree");
  const int64_t bs = iv.dim(0);
  std::vector<int64_t> diag(bs);
  for (int64_t i = 0; i < bs; ++i) diag[i] = i;
  Var logits =
      mul_scalar(g, matmul(g, image_embeds, text_embeds, false, true), scale_var);
  Var li2t = cross_entropy_with_logits(g, logits, diag);
  Var lt2i = cross_entropy_with_logits(g, transpose(g, logits), diag);
  return scale(g, add(g, li2t, lt2i), T(0.5));
}

}  // namespace cmlab
