#include <algorithm>
#include <cstdio>

#include "cmlab/model.hpp"
#include "cmlab/objective.hpp"
#include "cmlab/synth.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace cmlab;

namespace {

VitConfig tiny_vit() {
  VitConfig v;
  v.image_px = 16;
  v.patch_px = 8;
  v.embed_dim = 16;
  v.num_layers = 2;
  v.num_heads = 2;
  v.mlp_ratio = 2;
  v.proj_dim = 8;
  return v;
}

TextConfig tiny_txt() {
  TextConfig t;
  t.vocab_size = CaptionVocab::standard().size();
  t.context_len = 8;
  t.embed_dim = 16;
  t.num_layers = 2;
  t.num_heads = 2;
  t.proj_dim = 8;
  t.mlp_ratio = 2;
  return t;
}

ImageU8 random_image(int px, uint64_t seed) {
  ImageU8 img(px, px);
  Rng rng(seed);
  for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.below(256));
  return img;
}

template <typename T>
Tensor<T> encode_one_image(const ModelParams<T>& params, const ImageU8& img,
                           const MaskPlan& plan) {
  Graph<T> g;
  auto bound = bind_params(g, params, false);
  Var e = encode_image(g, bound, params.vit, {&img}, {plan});
  return g.value(e);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("init is deterministic per seed") {
  auto a = init_params<double>(tiny_vit(), tiny_txt(), 5);
  auto b = init_params<double>(tiny_vit(), tiny_txt(), 5);
  auto c = init_params<double>(tiny_vit(), tiny_txt(), 6);
  CHECK(params_hash(a) == params_hash(b));
  CHECK(params_hash(a) != params_hash(c));
  CHECK(a.at("log_temperature").data[0] == doctest::Approx(kLogTempInit));
  // layernorm gains start at one, biases at zero
  for (double v : a.at("img.blk0.ln1_g").data) CHECK(v == 1.0);
  for (double v : a.at("img.blk0.ln1_b").data) CHECK(v == 0.0);
}

TEST_CASE("keep-all plan equals the unmasked encoding bitwise") {
  auto params = init_params<double>(tiny_vit(), tiny_txt(), 1);
  auto img = random_image(16, 2);
  auto all = MaskPlan::keep_all(4);
  // a ratio-0 plan from the sampler must be the same keep-all plan
  Rng rng(3);
  auto sampled = sample_mask(std::vector<double>(4, 0.0),
                             keep_count_for(4, 0.0), rng);
  CHECK(sampled.kept == all.kept);
  auto e1 = encode_one_image(params, img, all);
  auto e2 = encode_one_image(params, img, sampled);
  CHECK(e1.data == e2.data);
}

TEST_CASE("embeddings are unit norm within 1e-12") {
  auto params = init_params<double>(tiny_vit(), tiny_txt(), 7);
  auto img = random_image(16, 8);
  auto e = encode_one_image(params, img, MaskPlan::keep_all(4));
  double n = 0;
  for (double v : e.data) n += v * v;
  CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-12);
}

TEST_CASE("embeddings never depend on pixels inside masked patches") {
  auto params = init_params<double>(tiny_vit(), tiny_txt(), 9);
  auto img_a = random_image(16, 10);
  auto img_b = img_a;
  // plan keeps patches 0 and 3; patches 1 and 2 get scribbled over in b
  MaskPlan plan;
  plan.total = 4;
  plan.keep_count = 2;
  plan.kept = {0, 3};
  Rng rng(11);
  for (int patch : {1, 2}) {
    const int pr = patch / 2, pc = patch % 2;
    for (int y = pr * 8; y < pr * 8 + 8; ++y)
      for (int x = pc * 8; x < pc * 8 + 8; ++x)
        img_b.set(x, y, static_cast<uint8_t>(rng.below(256)),
                  static_cast<uint8_t>(rng.below(256)),
                  static_cast<uint8_t>(rng.below(256)));
  }
  auto ea = encode_one_image(params, img_a, plan);
  auto eb = encode_one_image(params, img_b, plan);
  CHECK(ea.data == eb.data);  // bitwise
}

TEST_CASE("kept tokens carry the positional index of their original patch") {
  MaskPlan lone;
  lone.total = 4;
  lone.keep_count = 1;
  lone.kept = {2};
  MaskPlan pair;
  pair.total = 4;
  pair.keep_count = 2;
  pair.kept = {1, 2};
  auto idx_lone = image_position_indices({lone});
  auto idx_pair = image_position_indices({pair});
  CHECK(idx_lone == std::vector<int64_t>{3});
  CHECK(idx_pair == std::vector<int64_t>{2, 3});
  // patch 2's positional row (1 + 2) is identical in both plans
  CHECK(idx_lone[0] == idx_pair[1]);
}

TEST_CASE("patchify packs kept patches in canonical order, normalized") {
  VitConfig vit = tiny_vit();
  ImageU8 img(16, 16);
  // patch p filled with value 10 + p
  for (int p = 0; p < 4; ++p) {
    const int pr = p / 2, pc = p % 2;
    for (int y = pr * 8; y < pr * 8 + 8; ++y)
      for (int x = pc * 8; x < pc * 8 + 8; ++x)
        img.set(x, y, static_cast<uint8_t>(10 + p), 0, 255);
  }
  MaskPlan plan;
  plan.total = 4;
  plan.keep_count = 2;
  plan.kept = {1, 3};
  auto t = patchify_kept<double>({&img}, {plan}, vit);
  REQUIRE(t.shape == Shape{2, vit.patch_dim()});
  CHECK(t.data[0] == doctest::Approx(11.0 / 255 * 2 - 1));   // R of patch 1
  CHECK(t.data[1] == doctest::Approx(-1.0));                 // G == 0
  CHECK(t.data[2] == doctest::Approx(1.0));                  // B == 255
  CHECK(t.data[vit.patch_dim()] == doctest::Approx(13.0 / 255 * 2 - 1));
}

TEST_CASE("batch with heterogeneous keep counts is rejected") {
  auto params = init_params<double>(tiny_vit(), tiny_txt(), 12);
  auto img = random_image(16, 13);
  MaskPlan p1 = MaskPlan::keep_all(4);
  MaskPlan p2;
  p2.total = 4;
  p2.keep_count = 2;
  p2.kept = {0, 1};
  Graph<double> g;
  auto bound = bind_params(g, params, false);
  CHECK_THROWS_WITH_AS(
      encode_image(g, bound, params.vit, {&img, &img}, {p1, p2}),
      doctest::Contains("heterogeneous"), std::invalid_argument);
  MaskPlan wrong = MaskPlan::keep_all(9);
  CHECK_THROWS(encode_image(g, bound, params.vit, {&img}, {wrong}));
  ImageU8 small(8, 8);
  CHECK_THROWS(encode_image(g, bound, params.vit, {&small}, {p1}));
}

TEST_CASE("identical token sequences give identical embeddings") {
  auto params = init_params<double>(tiny_vit(), tiny_txt(), 20);
  auto vocab = CaptionVocab::standard();
  auto ids = vocab.encode("a red square", 8);
  Graph<double> g;
  auto bound = bind_params(g, params, false);
  Var e = encode_text(g, bound, params.txt, {ids, ids});
  const auto& v = g.value(e);
  for (int j = 0; j < params.txt.proj_dim; ++j)
    CHECK(v.data[j] == v.data[params.txt.proj_dim + j]);
  double n = 0;
  for (int j = 0; j < params.txt.proj_dim; ++j) n += v.data[j] * v.data[j];
  CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-12);
}

TEST_CASE("over-long text truncates to first len-1 tokens plus EOS") {
  auto params = init_params<double>(tiny_vit(), tiny_txt(), 21);
  auto vocab = CaptionVocab::standard();
  const std::string text = "a photo of a large orange triangle on a plain background";
  auto truncated = vocab.encode(text, 8);
  auto full = vocab.encode(text, 16);
  std::vector<int32_t> manual(full.begin(), full.begin() + 7);
  manual.push_back(CaptionVocab::kEos);
  CHECK(truncated == manual);
  Graph<double> g;
  auto bound = bind_params(g, params, false);
  Var e = encode_text(g, bound, params.txt, {truncated, manual});
  const auto& v = g.value(e);
  for (int j = 0; j < params.txt.proj_dim; ++j)
    CHECK(v.data[j] == v.data[params.txt.proj_dim + j]);
}

TEST_CASE("text encoder rejects out-of-vocab ids and missing EOS") {
  auto params = init_params<double>(tiny_vit(), tiny_txt(), 22);
  Graph<double> g;
  auto bound = bind_params(g, params, false);
  std::vector<int32_t> bad(8, 0);
  bad[0] = CaptionVocab::kBos;
  bad[1] = params.txt.vocab_size;  // out of range
  bad[2] = CaptionVocab::kEos;
  CHECK_THROWS(encode_text(g, bound, params.txt, {bad}));
  std::vector<int32_t> no_eos(8, CaptionVocab::kPad);
  no_eos[0] = CaptionVocab::kBos;
  CHECK_THROWS(encode_text(g, bound, params.txt, {no_eos}));
}

TEST_CASE("end-to-end gradients match finite differences (sampled)") {
  auto vit = tiny_vit();
  auto txt = tiny_txt();
  auto params = init_params<double>(vit, txt, 30);
  auto vocab = CaptionVocab::standard();
  auto img0 = random_image(16, 31);
  auto img1 = random_image(16, 32);
  MaskPlan plan0, plan1;
  plan0.total = plan1.total = 4;
  plan0.keep_count = plan1.keep_count = 2;
  plan0.kept = {0, 2};
  plan1.kept = {1, 3};
  std::vector<std::vector<int32_t>> toks = {vocab.encode("a red square", 8),
                                            vocab.encode("a blue ring", 8)};

  auto loss_from = [&](const std::vector<Tensor<double>>& ts) {
    ModelParams<double> p = params;
    p.tensors = ts;
    Graph<double> g;
    auto bound = bind_params(g, p, true);
    Var ie = encode_image(g, bound, vit, {&img0, &img1}, {plan0, plan1});
    Var te = encode_text(g, bound, txt, toks);
    Var loss = info_nce_loss(g, ie, te, logit_scale(g, bound));
    return g.value(loss).data[0];
  };

  Graph<double> g;
  auto bound = bind_params(g, params, true);
  Var ie = encode_image(g, bound, vit, {&img0, &img1}, {plan0, plan1});
  Var te = encode_text(g, bound, txt, toks);
  g.backward(info_nce_loss(g, ie, te, logit_scale(g, bound)));
  std::vector<Tensor<double>> analytic;
  for (Var v : bound.ordered) analytic.push_back(g.grad(v));

  auto res = testutil::grad_check_sampled(loss_from, params.tensors, analytic,
                                          /*per_tensor=*/4);
  INFO("worst=", res.worst);
  CHECK(res.max_err < 1e-4);
}

TEST_CASE("flops: no masking means ratio one everywhere") {
  VitConfig vit;
  vit.image_px = 112;
  vit.patch_px = 8;  // 14x14 grid
  auto r = flops_report(vit, 0.0);
  for (const auto& row : r.rows) CHECK(row.ratio == 1.0);
  CHECK(r.total_ratio == 1.0);
}

TEST_CASE("flops: attention ratio is (S/S0)^2 exactly") {
  VitConfig vit;
  vit.image_px = 112;
  vit.patch_px = 8;  // N = 196
  auto r75 = flops_report(vit, 0.75);
  CHECK(r75.keep_count == 49);
  const double expect75 = (50.0 / 197.0) * (50.0 / 197.0);
  CHECK(r75.row("attention").ratio == doctest::Approx(expect75).epsilon(1e-15));
  CHECK(r75.row("linear").ratio == doctest::Approx(50.0 / 197.0).epsilon(1e-15));
  CHECK(r75.row("patch_embed").ratio == doctest::Approx(49.0 / 196.0).epsilon(1e-15));

  auto r90 = flops_report(vit, 0.9);
  CHECK(r90.keep_count == 20);
  CHECK(r90.row("attention").ratio ==
        doctest::Approx((21.0 / 197.0) * (21.0 / 197.0)).epsilon(1e-15));
  CHECK(r90.row("attention").ratio == doctest::Approx(0.011364).epsilon(1e-3));
}

TEST_CASE("flops: large-grid asymptotics at ratio one half") {
  VitConfig vit;
  vit.image_px = 800;
  vit.patch_px = 8;  // N = 10000
  auto r = flops_report(vit, 0.5);
  CHECK(r.row("attention").ratio == doctest::Approx(0.25).epsilon(1e-3));
  CHECK(r.row("linear").ratio == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("checkpoint round trip is bit-exact and strict") {
  auto params = init_params<float>(tiny_vit(), tiny_txt(), 40);
  const std::string path = "test_ckpt.bin";
  save_checkpoint(path, params, 123);
  CHECK(checkpoint_dtype(path) == Dtype::f32);
  auto back = load_checkpoint<float>(path);
  CHECK(back.step == 123);
  CHECK(back.params.vit == params.vit);
  CHECK(back.params.txt == params.txt);
  CHECK(params_hash(back.params) == params_hash(params));
  for (size_t i = 0; i < params.tensors.size(); ++i)
    CHECK(std::memcmp(params.tensors[i].data.data(),
                      back.params.tensors[i].data.data(),
                      params.tensors[i].data.size() * sizeof(float)) == 0);
  CHECK_THROWS(load_checkpoint<double>(path));  // dtype mismatch is an error
  std::remove(path.c_str());
}

TEST_CASE("config validation") {
  VitConfig v;
  v.image_px = 30;
  v.patch_px = 8;
  CHECK_THROWS(v.validate());
  v = VitConfig{};
  v.embed_dim = 30;
  v.num_heads = 4;
  CHECK_THROWS(v.validate());
  TextConfig t;
  t.vocab_size = 2;
  CHECK_THROWS(t.validate());
}

}  // TEST_SUITE
