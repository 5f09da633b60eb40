#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "cmlab/synth.hpp"
#include "doctest.h"

using namespace cmlab;

namespace {

// Pixel-template matcher: renders every class at the sample's known geometry
// and picks the best-agreeing mask. Used as the label-faithfulness oracle.
int match_class(const SynthSample& s, int image_px) {
  const uint8_t* bg = s.image.px(0, 0);
  std::vector<uint8_t> fg(static_cast<size_t>(image_px) * image_px, 0);
  for (int y = 0; y < image_px; ++y)
    for (int x = 0; x < image_px; ++x) {
      const uint8_t* p = s.image.px(x, y);
      fg[static_cast<size_t>(y) * image_px + x] =
          (p[0] != bg[0] || p[1] != bg[1] || p[2] != bg[2]) ? 1 : 0;
    }
  const double h = 0.5 * s.subject_scale * image_px;
  int best = -1;
  int64_t best_agree = -1;
  for (int c = 0; c < num_classes(); ++c) {
    auto cand = shape_mask(c, s.center_u, s.center_v, h, image_px);
    int64_t agree = 0;
    for (size_t i = 0; i < fg.size(); ++i) agree += (cand[i] == fg[i]);
    if (agree > best_agree) {
      best_agree = agree;
      best = c;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("same seed yields byte-identical datasets") {
  auto vocab = CaptionVocab::standard();
  SynthConfig cfg;
  cfg.image_px = 32;
  cfg.seed = 99;
  auto a = generate(20, cfg, vocab);
  auto b = generate(20, cfg, vocab);
  for (int i = 0; i < 20; ++i) {
    CHECK(a[i].image.rgb == b[i].image.rgb);
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].class_id == b[i].class_id);
    CHECK(a[i].center_u == b[i].center_u);
  }
  // per-index streams: sample 7 alone equals sample 7 of the batch
  auto lone = generate_one(cfg, vocab, 7);
  CHECK(lone.image.rgb == a[7].image.rgb);
  CHECK(lone.tokens == a[7].tokens);
}

TEST_CASE("centered placement with zero jitter pins the subject center") {
  auto vocab = CaptionVocab::standard();
  SynthConfig cfg;
  cfg.image_px = 64;
  cfg.jitter_sigma = 0.0;
  cfg.seed = 5;
  for (auto& s : generate(50, cfg, vocab)) {
    CHECK(s.center_u == 32.0f);
    CHECK(s.center_v == 32.0f);
  }
}

TEST_CASE("centered mode concentrates subject pixels in the central half-area") {
  auto vocab = CaptionVocab::standard();
  SynthConfig cfg;
  cfg.image_px = 64;
  cfg.jitter_sigma = 0.1;
  cfg.clutter = 0;
  cfg.seed = 21;
  const int n = 10000;
  const double side = cfg.image_px;
  const double lo = side * (1.0 - 1.0 / std::sqrt(2.0)) / 2.0;
  const double hi = side - lo;
  int64_t inside = 0, total = 0;
  for (int i = 0; i < n; ++i) {
    auto s = generate_one(cfg, vocab, i);
    const double h = 0.5 * s.subject_scale * side;
    auto mask = shape_mask(s.class_id, s.center_u, s.center_v, h, cfg.image_px);
    for (int y = 0; y < cfg.image_px; ++y)
      for (int x = 0; x < cfg.image_px; ++x)
        if (mask[static_cast<size_t>(y) * cfg.image_px + x]) {
          ++total;
          if (x + 0.5 >= lo && x + 0.5 <= hi && y + 0.5 >= lo && y + 0.5 <= hi)
            ++inside;
        }
  }
  CHECK(inside / double(total) >= 0.8);
}

TEST_CASE("uniform mode: centered mean but spread-out quadrant occupancy") {
  auto vocab = CaptionVocab::standard();
  SynthConfig cfg;
  cfg.image_px = 64;
  cfg.placement = PlacementMode::uniform;
  cfg.seed = 31;
  const int n = 10000;
  double mu = 0, mv = 0;
  int quad[4] = {0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    auto s = generate_one(cfg, vocab, i);
    mu += s.center_u;
    mv += s.center_v;
    const int q = (s.center_u >= 32.0f ? 1 : 0) + (s.center_v >= 32.0f ? 2 : 0);
    ++quad[q];
  }
  mu /= n;
  mv /= n;
  CHECK(std::abs(mu - 32.0) <= 0.02 * 64.0);
  CHECK(std::abs(mv - 32.0) <= 0.02 * 64.0);
  for (int q = 0; q < 4; ++q)
    CHECK(std::abs(quad[q] / double(n) - 0.25) < 0.02);
}

TEST_CASE("pixel-template matcher recovers every label at clutter zero") {
  auto vocab = CaptionVocab::standard();
  for (int image_px : {32, 64}) {
    SynthConfig cfg;
    cfg.image_px = image_px;
    cfg.clutter = 0;
    cfg.placement = PlacementMode::uniform;  // hardest case for the matcher
    cfg.seed = 77;
    int correct = 0;
    const int n = 400;
    for (int i = 0; i < n; ++i) {
      auto s = generate_one(cfg, vocab, i);
      if (match_class(s, image_px) == s.class_id) ++correct;
    }
    CHECK(correct == n);
  }
}

TEST_CASE("class balance is roughly uniform") {
  auto vocab = CaptionVocab::standard();
  SynthConfig cfg;
  cfg.image_px = 32;
  cfg.seed = 3;
  std::vector<int> counts(num_classes(), 0);
  const int n = 8000;
  for (int i = 0; i < n; ++i) ++counts[generate_one(cfg, vocab, i).class_id];
  for (int c = 0; c < num_classes(); ++c)
    CHECK(std::abs(counts[c] / double(n) - 1.0 / num_classes()) < 0.02);
}

TEST_CASE("captions fit the context and decode to real words") {
  auto vocab = CaptionVocab::standard();
  SynthConfig cfg;
  cfg.image_px = 32;
  cfg.context_len = 16;
  cfg.seed = 8;
  for (auto& s : generate(100, cfg, vocab)) {
    REQUIRE(s.tokens.size() == 16);
    CHECK(s.tokens[0] == CaptionVocab::kBos);
    CHECK(std::count(s.tokens.begin(), s.tokens.end(), CaptionVocab::kEos) == 1);
    // the class word appears in the caption
    const int32_t cls_id = vocab.id(class_names()[s.class_id]);
    CHECK(std::count(s.tokens.begin(), s.tokens.end(), cls_id) == 1);
  }
}

TEST_CASE("encode pads, frames and truncates") {
  auto vocab = CaptionVocab::standard();
  auto ids = vocab.encode("a red square", 8);
  REQUIRE(ids.size() == 8);
  CHECK(ids[0] == CaptionVocab::kBos);
  CHECK(ids[4] == CaptionVocab::kEos);
  CHECK(ids[5] == CaptionVocab::kPad);
  // truncation: first len-1 tokens then EOS
  auto longer = vocab.encode("a photo of a large orange triangle on a plain background", 6);
  REQUIRE(longer.size() == 6);
  auto full = vocab.encode("a photo of a large orange triangle on a plain background", 32);
  for (int i = 0; i < 5; ++i) CHECK(longer[i] == full[i]);
  CHECK(longer[5] == CaptionVocab::kEos);
  CHECK_THROWS(vocab.encode("a nonexistent-word here", 8));
}

TEST_CASE("class_prompts: counting, duplicates kept, classes distinct") {
  auto vocab = CaptionVocab::standard();
  auto one = class_prompts(vocab, {"a photo of a {class}"}, 16);
  REQUIRE(static_cast<int>(one.size()) == num_classes());
  for (auto& per_class : one) CHECK(per_class.size() == 1);

  auto dup = class_prompts(vocab, {"a {class}", "a {class}"}, 16);
  CHECK(dup[0][0] == dup[0][1]);  // duplicates are not deduped

  std::set<std::vector<int32_t>> distinct;
  for (auto& per_class : one) distinct.insert(per_class[0]);
  CHECK(distinct.size() == one.size());

  CHECK_THROWS(class_prompts(vocab, {}, 16));
  CHECK_THROWS(class_prompts(vocab, {"a {class} zeppelin"}, 16));
}

TEST_CASE("dataset file round trip") {
  Dataset ds;
  ds.vocab = CaptionVocab::standard();
  ds.config.image_px = 32;
  ds.config.context_len = 12;
  ds.config.seed = 4242;
  ds.config.placement = PlacementMode::uniform;
  ds.samples = generate(17, ds.config, ds.vocab);
  const std::string path = "test_ds.bin";
  save_dataset(path, ds);
  auto back = load_dataset(path);
  REQUIRE(back.size() == 17);
  CHECK(back.config.image_px == 32);
  CHECK(back.config.context_len == 12);
  CHECK(back.config.placement == PlacementMode::uniform);
  CHECK(back.vocab.size() == ds.vocab.size());
  for (int i = 0; i < 17; ++i) {
    CHECK(back.samples[i].image.rgb == ds.samples[i].image.rgb);
    CHECK(back.samples[i].tokens == ds.samples[i].tokens);
    CHECK(back.samples[i].class_id == ds.samples[i].class_id);
    CHECK(back.samples[i].center_u == ds.samples[i].center_u);
    CHECK(back.samples[i].center_v == ds.samples[i].center_v);
  }
  std::remove(path.c_str());
  std::remove((path + ".vocab.txt").c_str());
}

TEST_CASE("bad configs are rejected") {
  SynthConfig cfg;
  cfg.image_px = 4;
  CHECK_THROWS(cfg.validate());
  cfg = SynthConfig{};
  cfg.subject_scale_min = -0.1;
  CHECK_THROWS(cfg.validate());
  cfg = SynthConfig{};
  cfg.jitter_sigma = -1;
  CHECK_THROWS(cfg.validate());
}

}  // TEST_SUITE
