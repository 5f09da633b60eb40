// The two-tower model: a tiny ViT over kept patches and a bidirectional text
// transformer, projecting into a shared embedding space, plus the learned
// log-temperature. Includes parameter init, graph binding, the forward
// builders, analytic FLOP accounting, and the checkpoint format.

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmlab/graph.hpp"
#include "cmlab/image.hpp"
#include "cmlab/mask.hpp"
#include "cmlab/rng.hpp"
#include "cmlab/tensor.hpp"

namespace cmlab {

struct VitConfig {
  int image_px = 32;
  int patch_px = 8;
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  int mlp_ratio = 4;
  int proj_dim = 32;

  int grid_side() const { return image_px / patch_px; }
  int grid_total() const { return grid_side() * grid_side(); }
  int patch_dim() const { return patch_px * patch_px * 3; }
  PatchGrid grid() const { return PatchGrid{grid_side(), grid_side()}; }

  void validate() const {
    if (patch_px < 1 || image_px < patch_px || image_px % patch_px != 0)
      throw std::invalid_argument("vit: image_px must be a positive multiple of patch_px");
    if (embed_dim < 1 || num_heads < 1 || embed_dim % num_heads != 0)
      throw std::invalid_argument("vit: embed_dim must divide evenly into heads");
    if (num_layers < 1 || mlp_ratio < 1 || proj_dim < 1)
      throw std::invalid_argument("vit: bad layer/mlp/proj configuration");
  }
  bool operator==(const VitConfig&) const = default;
};

struct TextConfig {
  int vocab_size = 0;
  int context_len = 16;
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  int proj_dim = 32;
  int mlp_ratio = 4;

  void validate() const {
    if (vocab_size < 4)
      throw std::invalid_argument("text: vocab_size must cover the specials");
    if (context_len < 2)
      throw std::invalid_argument("text: context_len must be >= 2");
    if (embed_dim < 1 || num_heads < 1 || embed_dim % num_heads != 0)
      throw std::invalid_argument("text: embed_dim must divide evenly into heads");
    if (num_layers < 1 || proj_dim < 1 || mlp_ratio < 1)
      throw std::invalid_argument("text: bad layer/proj configuration");
  }
  bool operator==(const TextConfig&) const = default;
};

// log(1/0.07), the CLIP temperature-initialization convention
inline constexpr double kLogTempInit = 2.6592600369327783;
inline constexpr double kLogitScaleMin = 1.0;
inline constexpr double kLogitScaleMax = 100.0;

// ----------------------------------------------------------------- params

template <typename T>
struct ModelParams {
  VitConfig vit;
  TextConfig txt;
  // insertion order is the canonical parameter order (checkpoints, optimizer)
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;
  std::vector<uint8_t> decay;  // weight decay applies to this parameter

  int64_t count() const { return static_cast<int64_t>(tensors.size()); }
  int64_t numel() const {
    int64_t n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
  }
  Tensor<T>& at(const std::string& name) {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return tensors[i];
    throw std::invalid_argument("params: no tensor named '" + name + "'");
  }
};

namespace detail {

// Single walk that defines every parameter: name, shape, decay flag, init.
// Both init and checkpoint load validation use it, so order cannot drift.
enum class InitKind { trunc_normal, zeros, ones, log_temp };

struct ParamSpec {
  std::string name;
  Shape shape;
  bool decay;
  InitKind init;
};

inline std::vector<ParamSpec> param_specs(const VitConfig& vit,
                                          const TextConfig& txt) {
  std::vector<ParamSpec> out;
  auto block = [&](const std::string& p, int d, int mlp_ratio) {
    out.push_back({p + ".ln1_g", {d}, false, InitKind::ones});
    out.push_back({p + ".ln1_b", {d}, false, InitKind::zeros});
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      out.push_back({p + "." + w, {d, d}, true, InitKind::trunc_normal});
      out.push_back({p + ".b" + std::string(1, w[1]), {d}, false, InitKind::zeros});
    }
    out.push_back({p + ".ln2_g", {d}, false, InitKind::ones});
    out.push_back({p + ".ln2_b", {d}, false, InitKind::zeros});
    out.push_back({p + ".mlp_w1", {d, mlp_ratio * d}, true, InitKind::trunc_normal});
    out.push_back({p + ".mlp_b1", {mlp_ratio * d}, false, InitKind::zeros});
    out.push_back({p + ".mlp_w2", {mlp_ratio * d, d}, true, InitKind::trunc_normal});
    out.push_back({p + ".mlp_b2", {d}, false, InitKind::zeros});
  };

  const int dv = vit.embed_dim, dt = txt.embed_dim;
  out.push_back({"img.patch_w", {vit.patch_dim(), dv}, true, InitKind::trunc_normal});
  out.push_back({"img.patch_b", {dv}, false, InitKind::zeros});
  out.push_back({"img.cls", {1, dv}, true, InitKind::trunc_normal});
  out.push_back({"img.pos", {vit.grid_total() + 1, dv}, true, InitKind::trunc_normal});
  for (int i = 0; i < vit.num_layers; ++i)
    block("img.blk" + std::to_string(i), dv, vit.mlp_ratio);
  out.push_back({"img.ln_f_g", {dv}, false, InitKind::ones});
  out.push_back({"img.ln_f_b", {dv}, false, InitKind::zeros});
  out.push_back({"img.proj", {dv, vit.proj_dim}, true, InitKind::trunc_normal});

  out.push_back({"txt.tok", {txt.vocab_size, dt}, true, InitKind::trunc_normal});
  out.push_back({"txt.pos", {txt.context_len, dt}, true, InitKind::trunc_normal});
  for (int i = 0; i < txt.num_layers; ++i)
    block("txt.blk" + std::to_string(i), dt, txt.mlp_ratio);
  out.push_back({"txt.ln_f_g", {dt}, false, InitKind::ones});
  out.push_back({"txt.ln_f_b", {dt}, false, InitKind::zeros});
  out.push_back({"txt.proj", {dt, txt.proj_dim}, true, InitKind::trunc_normal});

  out.push_back({"log_temperature", {1}, false, InitKind::log_temp});
  return out;
}

}  // namespace detail

template <typename T>
ModelParams<T> init_params(const VitConfig& vit, const TextConfig& txt,
                           uint64_t seed) {
  vit.validate();
  txt.validate();
  if (vit.proj_dim != txt.proj_dim)
    throw std::invalid_argument("model: image and text proj_dim must match");
  ModelParams<T> p;
  p.vit = vit;
  p.txt = txt;
  Rng rng(hash_seed(seed, 0x1717));
  for (const auto& spec : detail::param_specs(vit, txt)) {
    Tensor<T> t(spec.shape);
    switch (spec.init) {
      case detail::InitKind::zeros:
        break;
      case detail::InitKind::ones:
        std::fill(t.data.begin(), t.data.end(), T(1));
        break;
      case detail::InitKind::log_temp:
        t.data[0] = T(kLogTempInit);
        break;
      case detail::InitKind::trunc_normal:
        for (auto& x : t.data) {
          double z;
          do {
            z = rng.normal();
          } while (std::abs(z) > 2.0);
          x = static_cast<T>(0.02 * z);
        }
        break;
    }
    p.names.push_back(spec.name);
    p.tensors.push_back(std::move(t));
    p.decay.push_back(spec.decay ? 1 : 0);
  }
  return p;
}

// Leafs every parameter into a graph (in canonical order) and exposes them by
// name for the forward builders.
template <typename T>
struct BoundParams {
  std::unordered_map<std::string, Var> vars;
  std::vector<Var> ordered;

  Var operator()(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end())
      throw std::invalid_argument("bound params: no '" + name + "'");
    return it->second;
  }
};

template <typename T>
BoundParams<T> bind_params(Graph<T>& g, const ModelParams<T>& p,
                           bool requires_grad) {
  BoundParams<T> b;
  for (size_t i = 0; i < p.names.size(); ++i) {
    Var v = g.leaf(p.tensors[i], requires_grad);
    b.vars.emplace(p.names[i], v);
    b.ordered.push_back(v);
  }
  return b;
}

// ---------------------------------------------------------------- forward

namespace detail {

// pre-LN transformer block: x + attn(ln1(x)), then x + mlp(ln2(x))
template <typename T>
Var transformer_block(Graph<T>& g, const BoundParams<T>& p,
                      const std::string& prefix, Var x, int64_t batch,
                      int64_t seq, int64_t dim, int64_t heads) {
  const int64_t hd = dim / heads;
  auto head_split = [&](Var t) {
    Var r = reshape(g, t, {batch, seq, heads, hd});
    r = permute(g, r, {0, 2, 1, 3});
    return reshape(g, r, {batch * heads, seq, hd});
  };
  Var h = layernorm(g, x, p(prefix + ".ln1_g"), p(prefix + ".ln1_b"), T(1e-5));
  Var q = head_split(add(g, matmul(g, h, p(prefix + ".wq")), p(prefix + ".bq")));
  Var k = head_split(add(g, matmul(g, h, p(prefix + ".wk")), p(prefix + ".bk")));
  Var v = head_split(add(g, matmul(g, h, p(prefix + ".wv")), p(prefix + ".bv")));
  Var scores = scale(g, bmm(g, q, k, false, true),
                     T(1.0 / std::sqrt(static_cast<double>(hd))));
  Var ctx = bmm(g, softmax(g, scores), v);
  ctx = reshape(g, ctx, {batch, heads, seq, hd});
  ctx = permute(g, ctx, {0, 2, 1, 3});
  ctx = reshape(g, ctx, {batch * seq, dim});
  Var attn_out = add(g, matmul(g, ctx, p(prefix + ".wo")), p(prefix + ".bo"));
  x = add(g, x, attn_out);

  Var m = layernorm(g, x, p(prefix + ".ln2_g"), p(prefix + ".ln2_b"), T(1e-5));
  m = gelu(g, add(g, matmul(g, m, p(prefix + ".mlp_w1")), p(prefix + ".mlp_b1")));
  m = add(g, matmul(g, m, p(prefix + ".mlp_w2")), p(prefix + ".mlp_b2"));
  return add(g, x, m);
}

}  // namespace detail

// EOS id as laid out by the caption vocabulary (kept local: the model layer
// does not depend on the data generator).
inline constexpr int32_t kEosTokenId = 2;

// Pixels of the kept patches only, normalized to [-1, 1], packed as one
// (B*keep) x patch_dim matrix. Masked-out pixels never enter the graph, which
// makes mask-content independence structural rather than incidental.
template <typename T>
Tensor<T> patchify_kept(const std::vector<const ImageU8*>& images,
                        const std::vector<MaskPlan>& plans,
                        const VitConfig& vit) {
  const int64_t batch = static_cast<int64_t>(images.size());
  if (batch == 0) throw std::invalid_argument("patchify: empty batch");
  if (plans.size() != images.size())
    throw std::invalid_argument("patchify: one plan per image required");
  const int keep = plans[0].keep_count;
  const int n = vit.grid_total();
  const int side = vit.grid_side(), px = vit.patch_px;
  for (const auto& plan : plans) {
    plan.validate();
    if (plan.keep_count != keep)
      throw std::invalid_argument(
          "patchify: heterogeneous keep_count within a batch");
    if (plan.total != n)
      throw std::invalid_argument("patchify: plan/grid patch count mismatch");
  }
  Tensor<T> out({batch * keep, vit.patch_dim()});
  for (int64_t b = 0; b < batch; ++b) {
    const ImageU8& img = *images[b];
    if (img.width != vit.image_px || img.height != vit.image_px)
      throw std::invalid_argument("patchify: image size mismatch");
    for (int j = 0; j < keep; ++j) {
      const int idx = plans[b].kept[j];
      const int pr = idx / side, pc = idx % side;
      T* dst = out.data.data() + (b * keep + j) * vit.patch_dim();
      for (int y = 0; y < px; ++y) {
        const uint8_t* src = img.px(pc * px, pr * px + y);
        for (int x = 0; x < 3 * px; ++x)
          dst[y * 3 * px + x] = static_cast<T>(src[x] / T(255) * T(2) - T(1));
      }
    }
  }
  return out;
}

// Row indices into the positional table for every kept token: each kept patch
// receives the embedding of its ORIGINAL grid index (+1 because row 0 belongs
// to the class token), never of its packed position.
inline std::vector<int64_t> image_position_indices(
    const std::vector<MaskPlan>& plans) {
  std::vector<int64_t> pos_idx;
  for (const auto& plan : plans)
    for (int32_t kept : plan.kept) pos_idx.push_back(1 + kept);
  return pos_idx;
}

// Unit-norm image embeddings for a batch sharing one keep_count. Sequence per
// image: [class token; kept patch tokens], each patch token carrying the
// positional embedding of its original grid index.
template <typename T>
Var encode_image(Graph<T>& g, const BoundParams<T>& p, const VitConfig& vit,
                 const std::vector<const ImageU8*>& images,
                 const std::vector<MaskPlan>& plans) {
  vit.validate();
  Tensor<T> patches = patchify_kept<T>(images, plans, vit);
  const int64_t batch = static_cast<int64_t>(images.size());
  const int64_t keep = plans[0].keep_count;
  const int64_t seq = keep + 1;

  Var x = g.constant(std::move(patches));
  Var tok = add(g, matmul(g, x, p("img.patch_w")), p("img.patch_b"));
  tok = add(g, tok, gather_rows(g, p("img.pos"), image_position_indices(plans)));

  // class token (+ its positional embedding), replicated across the batch
  Var cls = add(g, p("img.cls"), gather_rows(g, p("img.pos"), {0}));
  Var cls_b = gather_rows(g, cls, std::vector<int64_t>(batch, 0));

  // interleave [cls_b; tok] into per-image sequences via one permutation
  Var stacked = concat0(g, {cls_b, tok});
  std::vector<int64_t> perm(batch * seq);
  for (int64_t b = 0; b < batch; ++b) {
    perm[b * seq] = b;
    for (int64_t j = 0; j < keep; ++j)
      perm[b * seq + 1 + j] = batch + b * keep + j;
  }
  Var h = gather_rows(g, stacked, std::move(perm));

  for (int i = 0; i < vit.num_layers; ++i)
    h = detail::transformer_block(g, p, "img.blk" + std::to_string(i), h,
                                  batch, seq, vit.embed_dim, vit.num_heads);
  h = layernorm(g, h, p("img.ln_f_g"), p("img.ln_f_b"), T(1e-5));

  std::vector<int64_t> cls_rows(batch);
  for (int64_t b = 0; b < batch; ++b) cls_rows[b] = b * seq;
  Var pooled = gather_rows(g, h, std::move(cls_rows));
  return l2_normalize(g, matmul(g, pooled, p("img.proj")));
}

// Unit-norm text embeddings; readout at each sequence's first EOS token.
template <typename T>
Var encode_text(Graph<T>& g, const BoundParams<T>& p, const TextConfig& txt,
                const std::vector<std::vector<int32_t>>& token_batch) {
  txt.validate();
  const int64_t batch = static_cast<int64_t>(token_batch.size());
  if (batch == 0) throw std::invalid_argument("encode_text: empty batch");
  const int64_t seq = txt.context_len;
  std::vector<int64_t> flat;
  flat.reserve(batch * seq);
  std::vector<int64_t> eos_rows(batch, -1);
  for (int64_t b = 0; b < batch; ++b) {
    const auto& ids = token_batch[b];
    if (static_cast<int64_t>(ids.size()) != seq)
      throw std::invalid_argument("encode_text: sequence length != context_len");
    for (int64_t t = 0; t < seq; ++t) {
      if (ids[t] < 0 || ids[t] >= txt.vocab_size)
        throw std::invalid_argument("encode_text: token id " +
                                    std::to_string(ids[t]) +
                                    " outside vocab of " +
                                    std::to_string(txt.vocab_size));
      if (ids[t] == kEosTokenId && eos_rows[b] < 0)
        eos_rows[b] = b * seq + t;
      flat.push_back(ids[t]);
    }
    if (eos_rows[b] < 0)
      throw std::invalid_argument("encode_text: sequence without EOS");
  }
  Var emb = gather_rows(g, p("txt.tok"), std::move(flat));
  std::vector<int64_t> pos_idx(batch * seq);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t < seq; ++t) pos_idx[b * seq + t] = t;
  Var h = add(g, emb, gather_rows(g, p("txt.pos"), std::move(pos_idx)));

  for (int i = 0; i < txt.num_layers; ++i)
    h = detail::transformer_block(g, p, "txt.blk" + std::to_string(i), h,
                                  batch, seq, txt.embed_dim, txt.num_heads);
  h = layernorm(g, h, p("txt.ln_f_g"), p("txt.ln_f_b"), T(1e-5));
  Var pooled = gather_rows(g, h, std::move(eos_rows));
  return l2_normalize(g, matmul(g, pooled, p("txt.proj")));
}

// exp(log_temperature) clamped to [1, 100]; multiply similarities by this.
template <typename T>
Var logit_scale(Graph<T>& g, const BoundParams<T>& p) {
  return clamp(g, exp_op(g, p("log_temperature")), T(kLogitScaleMin),
               T(kLogitScaleMax));
}

// ------------------------------------------------------------------ flops

// Analytic multiply-add counts for one image forward pass. Three terms:
// patch embedding scales with the kept count, attention scores/context scale
// with S^2, and the token-linear work (qkv/out projections + MLP) scales
// with S, where S = keep_count + 1.
struct FlopsReport {
  struct Row {
    std::string component;
    double macs_masked = 0;
    double macs_unmasked = 0;
    double ratio = 0;
  };
  int keep_count = 0;
  int seq_masked = 0;
  int seq_unmasked = 0;
  std::vector<Row> rows;
  double total_masked = 0;
  double total_unmasked = 0;
  double total_ratio = 0;

  const Row& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.component == name) return r;
    throw std::invalid_argument("flops: no row '" + name + "'");
  }
};

FlopsReport flops_report(const VitConfig& vit, double mask_ratio);
std::string format_flops(const FlopsReport& r);

// ------------------------------------------------------------- checkpoint
//
// Layout: magic "CMLCKPT1", u32 version, u8 dtype, u64 step, VitConfig as
// 7 x i32, TextConfig as 7 x i32, u32 tensor count, then per parameter:
// u16 name length, name bytes, u8 decay flag, tensor in the engine's
// serialization format. Loading against expected configs is strict: any
// mismatch is an error, never a silent reshape.

template <typename T>
struct Checkpoint {
  ModelParams<T> params;
  uint64_t step = 0;
};

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& params,
                     uint64_t step);
template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path);

Dtype checkpoint_dtype(const std::string& path);

template <typename T>
uint64_t params_hash(const ModelParams<T>& p);

// (defined in model.cpp; explicit instantiations for float and double)

}  // namespace cmlab
