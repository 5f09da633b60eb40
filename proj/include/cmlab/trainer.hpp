// Two-phase training: masked contrastive pre-training, then a short unmasked
// tuning phase with its own optimizer hyperparameters, AdamW with decoupled
// weight decay, and linear-warmup cosine-decay scheduling. Emits a per-step
// metrics CSV, periodic checkpoints, and a manifest the run can be reproduced
// from.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmlab/config.hpp"
#include "cmlab/model.hpp"
#include "cmlab/tensor.hpp"

namespace cmlab {

struct TrainConfig {
  std::string data;
  std::string out_dir = "runs";
  int epochs = 30;
  int batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int warmup_steps = 200;
  double mask_ratio = 0.5;
  std::string mask_strategy = "gaussian";
  double sigma = 0.2;
  uint64_t seed = 0;
  int tune_epochs = 1;
  double tune_lr = 1e-4;
  double tune_weight_decay = 0.05;
  double tune_beta1 = 0.9;
  double tune_beta2 = 0.98;
  std::string precision = "f64";
  int checkpoint_every = 0;  // 0: phase boundaries only
  bool allow_any_ratio = false;
  bool mask_deterministic_topk = false;
  bool skip_existing = false;
  int patch_px = 8;
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  int mlp_ratio = 4;
  int proj_dim = 32;

  static const Schema& schema();
  static TrainConfig from_kv(const KvMap& kv);
  KvMap to_kv() const;
  void validate() const;
};

struct TrainResult {
  std::string run_dir;
  std::string final_checkpoint;
  std::string phase1_checkpoint;
  std::string metrics_path;
  std::string manifest_path;
  uint64_t config_hash = 0;
  int total_steps = 0;
  double final_loss = 0;
  bool reused = false;  // run directory already existed and was left intact
};

// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
// at total_steps.
double lr_schedule(int64_t step, int64_t total_steps, int64_t warmup_steps,
                   double base_lr);

// Decoupled-weight-decay Adam over a parameter registry. Weight decay is
// applied only where the registry's decay flag is set (never to biases,
// layernorm gains, or the log-temperature).
template <typename T>
struct AdamWState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
  std::vector<Tensor<T>> m, v;
  int64_t t = 0;

  void init(const ModelParams<T>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params.tensors) {
      m.push_back(Tensor<T>::zeros(p.shape));
      v.push_back(Tensor<T>::zeros(p.shape));
    }
    t = 0;
  }

  // grads in the registry's canonical order; throws on non-finite gradients
  void step(ModelParams<T>& params, const std::vector<const Tensor<T>*>& grads,
            double lr);
};

// Dispatches on cfg.precision ("f32" or "f64").
TrainResult train_run(const TrainConfig& cfg);

}  // namespace cmlab
