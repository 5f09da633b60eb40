// Procedural image-caption datasets: colored geometric subjects on plain
// backgrounds with optional clutter, templated captions, a word-level
// tokenizer, and a binary dataset file format.
//
// Generation is deterministic and embarrassingly parallel: sample i draws
// from a stream seeded by hash(seed, i), so parallel and sequential
// generation agree byte for byte.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmlab/image.hpp"
#include "cmlab/rng.hpp"

namespace cmlab {

// ----------------------------------------------------------------- vocab

class CaptionVocab {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kBos = 1;
  static constexpr int32_t kEos = 2;

  // Fixed vocabulary covering every caption/prompt template word plus the
  // class and color names.
  static CaptionVocab standard();

  int32_t size() const { return static_cast<int32_t>(words_.size()); }
  int32_t id(const std::string& word) const;      // throws on unknown word
  const std::string& word(int32_t id) const;
  bool contains(const std::string& word) const;

  // whitespace split -> ids (no specials)
  std::vector<int32_t> tokenize(const std::string& text) const;
  // BOS + tokens + EOS, padded with PAD to len; sequences longer than len
  // keep their first len-1 tokens and end with EOS
  std::vector<int32_t> encode(const std::string& text, int len) const;

  void save(const std::string& path) const;  // one word per line, id order
  static CaptionVocab load(const std::string& path);

 private:
  std::vector<std::string> words_;
  // linear scan is fine at this vocabulary size
};

// ----------------------------------------------------------------- scenes

enum class PlacementMode { centered, uniform };

std::string to_string(PlacementMode m);
PlacementMode placement_from_string(const std::string& s);

struct SynthConfig {
  int image_px = 64;
  int context_len = 16;
  PlacementMode placement = PlacementMode::centered;
  double jitter_sigma = 0.08;       // fraction of the image side (centered mode)
  double subject_scale_min = 0.28;  // subject diameter as fraction of side
  double subject_scale_max = 0.45;
  int clutter = 2;  // distractor shapes per image
  uint64_t seed = 0;

  void validate() const;
};

struct SynthSample {
  ImageU8 image;
  std::vector<int32_t> tokens;
  int32_t class_id = 0;
  float center_u = 0, center_v = 0;  // subject center, pixels
  float subject_scale = 0;           // diameter / image side
};

int num_classes();
const std::vector<std::string>& class_names();
const std::vector<std::string>& color_names();

// Boolean coverage mask of one shape instance: class shape centered at
// (cx, cy) with half-extent h, rasterized on an image_px grid. This is the
// single source of truth for subject geometry (generator, visualizers and
// the pixel-template matcher in the tests all call it).
std::vector<uint8_t> shape_mask(int class_id, double cx, double cy, double h,
                                int image_px);

SynthSample generate_one(const SynthConfig& cfg, const CaptionVocab& vocab,
                         uint64_t index);
std::vector<SynthSample> generate(int n, const SynthConfig& cfg,
                                  const CaptionVocab& vocab);

// Per-class tokenized prompt variants; duplicates are kept as-is.
// Templates use "{class}" as the placeholder.
std::vector<std::vector<std::vector<int32_t>>> class_prompts(
    const CaptionVocab& vocab, const std::vector<std::string>& templates,
    int context_len);

const std::vector<std::string>& default_class_templates();

// ----------------------------------------------------------- dataset file
//
// Binary layout: magic "CMLDATA1", u32 version, u64 count, u32 image_px,
// u32 channels(3), u32 context_len, u32 num_classes, u32 vocab_size,
// u32 placement, f64 jitter_sigma, u64 seed; then per record: pixels
// (u8 * image_px^2 * 3), tokens (u16 * context_len), class_id (u16),
// center (f32 u, f32 v). The vocabulary is stored next to it as
// "<stem>.vocab.txt".

struct Dataset {
  SynthConfig config;
  CaptionVocab vocab;
  std::vector<SynthSample> samples;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace cmlab
