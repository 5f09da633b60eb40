// Evaluation: template-averaged zero-shot classification (masked and
// unmasked inference), image-text retrieval R@K, linear probing on frozen
// embeddings, and the sigma sweep harness.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmlab/config.hpp"
#include "cmlab/model.hpp"
#include "cmlab/synth.hpp"
#include "cmlab/trainer.hpp"

namespace cmlab {

// Inference-time masking mode for the image tower.
struct MaskMode {
  bool masked = false;
  std::string strategy = "gaussian";
  double ratio = 0.5;
  double sigma = 0.2;
  uint64_t seed = 0;

  static MaskMode unmasked() { return MaskMode{}; }
  std::string describe() const;
};

struct EvalReport {
  std::string task;
  int64_t split_size = 0;
  std::map<std::string, double> metrics;
  std::string mask_mode;
  uint64_t seed = 0;

  void validate() const;
};

std::string format_reports_csv(const std::vector<EvalReport>& reports);
std::string format_reports_text(const std::vector<EvalReport>& reports);

// Unit-norm image embeddings for a whole dataset under a mask mode, batched.
template <typename T>
Tensor<T> embed_images(const ModelParams<T>& params, const Dataset& ds,
                       const MaskMode& mode, int batch_size = 256);

// L2-normalized mean of the template text embeddings, one row per class.
template <typename T>
Tensor<T> class_embeddings(const ModelParams<T>& params,
                           const CaptionVocab& vocab,
                           const std::vector<std::string>& templates);

template <typename T>
EvalReport zero_shot_classify(const ModelParams<T>& params, const Dataset& ds,
                              const std::vector<std::string>& templates,
                              const MaskMode& mode);

template <typename T>
EvalReport retrieval(const ModelParams<T>& params, const Dataset& ds,
                     const std::vector<int>& ks = {1, 5, 10});

template <typename T>
EvalReport linear_probe(const ModelParams<T>& params, const Dataset& train_ds,
                        const Dataset& test_ds, int epochs, double lr,
                        uint64_t seed);

// ------------------------------------------------------------- CLI surface

struct EvalConfig {
  std::string checkpoint;
  std::string data;
  std::string probe_data;  // train split for the probe; empty disables it
  std::string out_dir = "runs";
  std::string tasks = "zero-shot,retrieval";
  double mask_ratio = 0.5;
  std::string mask_strategy = "gaussian";
  double sigma = 0.2;
  uint64_t seed = 0;
  int num_templates = 6;
  int probe_epochs = 30;
  double probe_lr = 0.01;

  static const Schema& schema();
  static EvalConfig from_kv(const KvMap& kv);
  KvMap to_kv() const;
};

struct EvalRunResult {
  std::string eval_dir;
  std::vector<EvalReport> reports;
  std::vector<std::string> warnings;
};

// Runs the selected tasks; zero-shot always reports both inference modes.
// Never mutates the checkpoint. Dispatches on the checkpoint dtype.
EvalRunResult eval_run(const EvalConfig& cfg);

// ------------------------------------------------------------- sigma sweep

struct SweepRow {
  std::string label;  // sigma value or "uniform"
  uint64_t seed = 0;
  double accuracy = 0;
  std::string run_dir;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::map<std::string, double> seed_averaged;  // label -> mean accuracy
  std::string csv_path;
};

// One full train+eval per (sigma, seed) with shared seeds, plus a uniform
// baseline row per seed. Reuses completed runs via skip_existing.
SweepResult sigma_sweep(const TrainConfig& base, const std::string& eval_data,
                        const std::vector<double>& sigmas,
                        const std::vector<uint64_t>& seeds,
                        bool include_uniform_baseline = true,
                        int num_templates = 6);

}  // namespace cmlab
