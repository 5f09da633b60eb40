#include "cmlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cmlab/graph.hpp"
#include "cmlab/hash.hpp"
#include "cmlab/objective.hpp"
#include "cmlab/synth.hpp"

namespace cmlab {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ config

const Schema& TrainConfig::schema() {
  static const Schema s = {
      {"data", "", "dataset file produced by gen-data"},
      {"out_dir", "runs", "directory that receives the run directory"},
      {"epochs", "30", "masked pre-training epochs"},
      {"batch_size", "128", "image-text pairs per step"},
      {"lr", "0.001", "peak learning rate (pre-training)"},
      {"weight_decay", "0.1", "decoupled weight decay (pre-training)"},
      {"beta1", "0.9", "Adam beta1 (pre-training)"},
      {"beta2", "0.999", "Adam beta2 (pre-training)"},
      {"warmup_steps", "200", "linear warmup steps (pre-training)"},
      {"mask_ratio", "0.5", "fraction of patches dropped per image"},
      {"mask_strategy", "gaussian", "uniform | gaussian | inverse-gaussian"},
      {"sigma", "0.2", "gaussian mask sigma (both axes)"},
      {"seed", "0", "run seed"},
      {"tune_epochs", "1", "unmasked tuning epochs after pre-training"},
      {"tune_lr", "0.0001", "peak learning rate (tuning phase)"},
      {"tune_weight_decay", "0.05", "weight decay (tuning phase)"},
      {"tune_beta1", "0.9", "Adam beta1 (tuning phase)"},
      {"tune_beta2", "0.98", "Adam beta2 (tuning phase)"},
      {"precision", "f64", "f64 | f32 (f32 is the opt-in fast mode)"},
      {"checkpoint_every", "0", "also checkpoint every N steps (0: phases only)"},
      {"allow_any_ratio", "false", "permit mask_ratio outside {0,0.5,0.75,0.9}"},
      {"mask.deterministic_topk", "false",
       "disable gumbel noise in the mask sampler (golden-file test mode)"},
      {"skip_existing", "false", "reuse the run directory if its manifest exists"},
      {"patch_px", "8", "patch side in pixels"},
      {"embed_dim", "64", "transformer width (both towers)"},
      {"num_layers", "2", "transformer depth (both towers)"},
      {"num_heads", "2", "attention heads (both towers)"},
      {"mlp_ratio", "4", "MLP hidden width multiplier"},
      {"proj_dim", "32", "shared embedding dimension"},
  };
  return s;
}

TrainConfig TrainConfig::from_kv(const KvMap& kv) {
  TrainConfig c;
  c.data = kv_str(kv, "data");
  c.out_dir = kv_str(kv, "out_dir");
  c.epochs = static_cast<int>(kv_int(kv, "epochs"));
  c.batch_size = static_cast<int>(kv_int(kv, "batch_size"));
  c.lr = kv_double(kv, "lr");
  c.weight_decay = kv_double(kv, "weight_decay");
  c.beta1 = kv_double(kv, "beta1");
  c.beta2 = kv_double(kv, "beta2");
  c.warmup_steps = static_cast<int>(kv_int(kv, "warmup_steps"));
  c.mask_ratio = kv_double(kv, "mask_ratio");
  c.mask_strategy = kv_str(kv, "mask_strategy");
  c.sigma = kv_double(kv, "sigma");
  c.seed = static_cast<uint64_t>(kv_int(kv, "seed"));
  c.tune_epochs = static_cast<int>(kv_int(kv, "tune_epochs"));
  c.tune_lr = kv_double(kv, "tune_lr");
  c.tune_weight_decay = kv_double(kv, "tune_weight_decay");
  c.tune_beta1 = kv_double(kv, "tune_beta1");
  c.tune_beta2 = kv_double(kv, "tune_beta2");
  c.precision = kv_str(kv, "precision");
  c.checkpoint_every = static_cast<int>(kv_int(kv, "checkpoint_every"));
  c.allow_any_ratio = kv_bool(kv, "allow_any_ratio");
  c.mask_deterministic_topk = kv_bool(kv, "mask.deterministic_topk");
  c.skip_existing = kv_bool(kv, "skip_existing");
  c.patch_px = static_cast<int>(kv_int(kv, "patch_px"));
  c.embed_dim = static_cast<int>(kv_int(kv, "embed_dim"));
  c.num_layers = static_cast<int>(kv_int(kv, "num_layers"));
  c.num_heads = static_cast<int>(kv_int(kv, "num_heads"));
  c.mlp_ratio = static_cast<int>(kv_int(kv, "mlp_ratio"));
  c.proj_dim = static_cast<int>(kv_int(kv, "proj_dim"));
  c.validate();
  return c;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KvMap TrainConfig::to_kv() const {
  KvMap kv;
  kv["data"] = data;
  kv["out_dir"] = out_dir;
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["lr"] = fmt_double(lr);
  kv["weight_decay"] = fmt_double(weight_decay);
  kv["beta1"] = fmt_double(beta1);
  kv["beta2"] = fmt_double(beta2);
  kv["warmup_steps"] = std::to_string(warmup_steps);
  kv["mask_ratio"] = fmt_double(mask_ratio);
  kv["mask_strategy"] = mask_strategy;
  kv["sigma"] = fmt_double(sigma);
  kv["seed"] = std::to_string(seed);
  kv["tune_epochs"] = std::to_string(tune_epochs);
  kv["tune_lr"] = fmt_double(tune_lr);
  kv["tune_weight_decay"] = fmt_double(tune_weight_decay);
  kv["tune_beta1"] = fmt_double(tune_beta1);
  kv["tune_beta2"] = fmt_double(tune_beta2);
  kv["precision"] = precision;
  kv["checkpoint_every"] = std::to_string(checkpoint_every);
  kv["allow_any_ratio"] = allow_any_ratio ? "true" : "false";
  kv["mask.deterministic_topk"] = mask_deterministic_topk ? "true" : "false";
  kv["skip_existing"] = skip_existing ? "true" : "false";
  kv["patch_px"] = std::to_string(patch_px);
  kv["embed_dim"] = std::to_string(embed_dim);
  kv["num_layers"] = std::to_string(num_layers);
  kv["num_heads"] = std::to_string(num_heads);
  kv["mlp_ratio"] = std::to_string(mlp_ratio);
  kv["proj_dim"] = std::to_string(proj_dim);
  return kv;
}

void TrainConfig::validate() const {
  if (data.empty()) throw std::runtime_error("train: 'data' is required");
  if (epochs < 0 || tune_epochs < 0)
    throw std::runtime_error("train: negative epoch counts");
  if (epochs + tune_epochs < 1)
    throw std::runtime_error("train: nothing to do (0 total epochs)");
  if (batch_size < 1) throw std::runtime_error("train: batch_size must be >= 1");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0))
    throw std::runtime_error("train: mask_ratio must be in [0, 1)");
  const bool standard = mask_ratio == 0.0 || mask_ratio == 0.5 ||
                        mask_ratio == 0.75 || mask_ratio == 0.9;
  if (!standard && !allow_any_ratio)
    throw std::runtime_error(
        "train: mask_ratio outside {0, 0.5, 0.75, 0.9}; pass "
        "allow_any_ratio=true to permit it");
  if (precision != "f32" && precision != "f64")
    throw std::runtime_error("train: precision must be f32 or f64");
  if (warmup_steps < 0) throw std::runtime_error("train: warmup_steps < 0");
  mask_strategy_from_string(mask_strategy);  // throws on junk
  if (!(sigma > 0)) throw std::runtime_error("train: sigma must be positive");
}

// ---------------------------------------------------------------- schedule

double lr_schedule(int64_t step, int64_t total_steps, int64_t warmup_steps,
                   double base_lr) {
  if (step < 0 || step >= total_steps)
    throw std::invalid_argument("lr_schedule: step out of range");
  if (warmup_steps > total_steps)
    throw std::invalid_argument("lr_schedule: warmup longer than the run");
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const int64_t span = std::max<int64_t>(1, total_steps - warmup_steps);
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(span);
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// ------------------------------------------------------------------- adamw

template <typename T>
void AdamWState<T>::step(ModelParams<T>& params,
                         const std::vector<const Tensor<T>*>& grads,
                         double lr) {
  if (grads.size() != params.tensors.size())
    throw std::runtime_error("adamw: gradient list does not match parameters");
  for (size_t i = 0; i < grads.size(); ++i)
    if (!kernels::all_finite(grads[i]->numel(), grads[i]->data.data()))
      throw std::runtime_error("adamw: non-finite gradient in '" +
                               params.names[i] + "'; step aborted");
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < grads.size(); ++i) {
    const T wd = params.decay[i] ? static_cast<T>(weight_decay) : T(0);
    kernels::adamw<T>(params.tensors[i].numel(), params.tensors[i].data.data(),
                      grads[i]->data.data(), m[i].data.data(), v[i].data.data(),
                      static_cast<T>(lr), static_cast<T>(beta1),
                      static_cast<T>(beta2), static_cast<T>(eps), wd,
                      static_cast<T>(bc1), static_cast<T>(bc2));
  }
}

template struct AdamWState<float>;
template struct AdamWState<double>;

// ------------------------------------------------------------------- train

namespace {

template <typename T>
TrainResult train_impl(const TrainConfig& cfg, const KvMap& kv) {
  Dataset ds = load_dataset(cfg.data);
  const int n = ds.size();

  VitConfig vit;
  vit.image_px = ds.config.image_px;
  vit.patch_px = cfg.patch_px;
  vit.embed_dim = cfg.embed_dim;
  vit.num_layers = cfg.num_layers;
  vit.num_heads = cfg.num_heads;
  vit.mlp_ratio = cfg.mlp_ratio;
  vit.proj_dim = cfg.proj_dim;
  TextConfig txt;
  txt.vocab_size = ds.vocab.size();
  txt.context_len = ds.config.context_len;
  txt.embed_dim = cfg.embed_dim;
  txt.num_layers = cfg.num_layers;
  txt.num_heads = cfg.num_heads;
  txt.mlp_ratio = cfg.mlp_ratio;
  txt.proj_dim = cfg.proj_dim;
  vit.validate();
  txt.validate();

  TrainResult res;
  res.config_hash = config_hash(kv);
  res.run_dir = cfg.out_dir + "/run-" + hex64(res.config_hash);
  res.metrics_path = res.run_dir + "/metrics.csv";
  res.final_checkpoint = res.run_dir + "/checkpoint_final.ckpt";
  res.phase1_checkpoint = res.run_dir + "/checkpoint_phase1.ckpt";
  res.manifest_path = res.run_dir + "/manifest.txt";

  if (cfg.skip_existing && fs::exists(res.manifest_path) &&
      fs::exists(res.final_checkpoint)) {
    res.reused = true;
    return res;
  }
  fs::create_directories(res.run_dir);

  const PatchGrid grid = vit.grid();
  const int total_patches = grid.total();
  const int keep = keep_count_for(total_patches, cfg.mask_ratio);
  MaskDistribution dist;
  dist.sigma_x = dist.sigma_y = cfg.sigma;
  dist.strategy = mask_strategy_from_string(cfg.mask_strategy);
  const std::vector<double> log_weights = grid_log_weights(grid, dist);

  auto params = init_params<T>(vit, txt, cfg.seed);
  AdamWState<T> opt;
  opt.eps = 1e-8;
  opt.init(params);

  std::ofstream metrics(res.metrics_path);
  if (!metrics) throw std::runtime_error("cannot write " + res.metrics_path);
  metrics << "step,phase,loss,lr,grad_norm,tokens_per_image\n";

  const int steps_per_epoch = n >= cfg.batch_size ? n / cfg.batch_size : 1;
  int64_t global_step = 0;
  double last_loss = 0;
  std::vector<ArtifactEntry> artifacts;

  auto save_ckpt = [&](const std::string& path) {
    save_checkpoint<T>(path, params, static_cast<uint64_t>(global_step));
    artifacts.push_back({fs::path(path).filename().string(),
                         static_cast<uint64_t>(fs::file_size(path)),
                         hash_file(path)});
  };

  auto run_phase = [&](const char* phase_name, int phase_epochs,
                       bool masked, double base_lr, double wd, double b1,
                       double b2, int64_t warmup) {
    if (phase_epochs == 0) return;
    const int64_t phase_steps =
        static_cast<int64_t>(phase_epochs) * steps_per_epoch;
    warmup = std::min<int64_t>(warmup, phase_steps);
    opt.beta1 = b1;
    opt.beta2 = b2;
    opt.weight_decay = wd;
    opt.init(params);  // each phase is its own optimization run

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < phase_epochs; ++epoch) {
      // deterministic shuffle keyed by (seed, phase, epoch)
      Rng shuffle_rng(hash_seed(cfg.seed ^ fnv1a64(phase_name),
                                static_cast<uint64_t>(epoch)));
      for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[shuffle_rng.below(i + 1)]);

      for (int s = 0; s < steps_per_epoch; ++s) {
        const int64_t phase_step =
            static_cast<int64_t>(epoch) * steps_per_epoch + s;
        const int bs = std::min(cfg.batch_size, n);
        const double lr_t = lr_schedule(phase_step, phase_steps, warmup, base_lr);

        std::vector<const ImageU8*> images(bs);
        std::vector<MaskPlan> plans(bs);
        std::vector<std::vector<int32_t>> tokens(bs);
        const int tokens_per_image = (masked ? keep : total_patches) + 1;
        for (int b = 0; b < bs; ++b) {
          const int idx = order[(s * cfg.batch_size + b) % n];
          images[b] = &ds.samples[idx].image;
          tokens[b] = ds.samples[idx].tokens;
          if (masked && keep < total_patches) {
            Rng mask_rng(hash_seed(
                hash_seed(cfg.seed ^ 0x6D61736Bull, static_cast<uint64_t>(global_step)),
                static_cast<uint64_t>(idx)));
            plans[b] = sample_mask(log_weights, keep, mask_rng,
                                   cfg.mask_deterministic_topk);
          } else {
            plans[b] = MaskPlan::keep_all(total_patches);
          }
          // the compute claim is structural: the encoder consumes exactly
          // keep_count + 1 tokens for this image
          if (plans[b].keep_count + 1 != tokens_per_image)
            throw std::runtime_error("train: token count invariant violated");
        }

        double loss_val = 0, grad_norm = 0;
        try {
          Graph<T> g;
          auto bound = bind_params(g, params, true);
          Var ie = encode_image(g, bound, vit, images, plans);
          Var te = encode_text(g, bound, txt, tokens);
          Var loss = info_nce_loss(g, ie, te, logit_scale(g, bound));
          loss_val = static_cast<double>(g.value(loss).data[0]);
          g.backward(loss);

          std::vector<const Tensor<T>*> grads;
          grads.reserve(bound.ordered.size());
          for (Var v : bound.ordered) grads.push_back(&g.grad(v));
          double sq = 0;
          for (const auto* gr : grads)
            sq += static_cast<double>(
                kernels::dot<T>(gr->numel(), gr->data.data(), gr->data.data()));
          grad_norm = std::sqrt(sq);
          opt.step(params, grads, lr_t);
        } catch (const std::exception& e) {
          // non-finite loss/grads or op failure: keep the last good params
          const std::string abort_ckpt = res.run_dir + "/checkpoint_abort.ckpt";
          save_checkpoint<T>(abort_ckpt, params, static_cast<uint64_t>(global_step));
          std::ofstream diag(res.run_dir + "/abort.txt");
          diag << "aborted at step " << global_step << " (" << phase_name
               << "): " << e.what() << "\n";
          throw std::runtime_error(
              std::string("training aborted at step ") +
              std::to_string(global_step) + ": " + e.what() +
              " (last good checkpoint: " + abort_ckpt + ")");
        }

        char line[256];
        std::snprintf(line, sizeof line, "%lld,%s,%.9g,%.9g,%.9g,%d\n",
                      static_cast<long long>(global_step), phase_name, loss_val,
                      lr_t, grad_norm, tokens_per_image);
        metrics << line;
        last_loss = loss_val;
        ++global_step;
        if (cfg.checkpoint_every > 0 && global_step % cfg.checkpoint_every == 0)
          save_ckpt(res.run_dir + "/checkpoint_step" +
                    std::to_string(global_step) + ".ckpt");
      }
    }
  };

  run_phase("pretrain", cfg.epochs, /*masked=*/true, cfg.lr, cfg.weight_decay,
            cfg.beta1, cfg.beta2, cfg.warmup_steps);
  save_ckpt(res.phase1_checkpoint);

  // tuning warmup: 10% of the phase's steps, floored at one step
  const int64_t tune_steps =
      static_cast<int64_t>(cfg.tune_epochs) * steps_per_epoch;
  const int64_t tune_warmup = std::max<int64_t>(1, tune_steps / 10);
  run_phase("tune", cfg.tune_epochs, /*masked=*/false, cfg.tune_lr,
            cfg.tune_weight_decay, cfg.tune_beta1, cfg.tune_beta2, tune_warmup);
  save_ckpt(res.final_checkpoint);

  metrics.close();
  artifacts.push_back({"metrics.csv",
                       static_cast<uint64_t>(fs::file_size(res.metrics_path)),
                       hash_file(res.metrics_path)});
  artifacts.push_back({"input:" + cfg.data,
                       static_cast<uint64_t>(fs::file_size(cfg.data)),
                       hash_file(cfg.data)});
  write_manifest(res.manifest_path, kv, cfg.seed, artifacts);

  res.total_steps = static_cast<int>(global_step);
  res.final_loss = last_loss;
  return res;
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg) {
  cfg.validate();
  const KvMap kv = cfg.to_kv();
  if (cfg.precision == "f32") return train_impl<float>(cfg, kv);
  return train_impl<double>(cfg, kv);
}

}  // namespace cmlab
