#include "cmlab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cmlab {

// ------------------------------------------------------------------ vocab

namespace {

const std::vector<std::string> kClassNames = {
    "square", "disc", "cross", "triangle", "ring", "bars", "diamond", "checker"};

const std::vector<std::string> kColorNames = {
    "red", "green", "blue", "yellow", "cyan", "magenta", "white", "orange"};

struct Rgb {
  uint8_t r, g, b;
};

const Rgb kFgColors[] = {{220, 40, 40},  {40, 200, 60},  {50, 90, 230},
                         {230, 220, 50}, {60, 210, 210}, {210, 60, 210},
                         {245, 245, 245}, {240, 150, 40}};

const Rgb kBgColors[] = {{12, 12, 12}, {42, 42, 42}, {70, 70, 82},
                         {28, 48, 28}, {52, 30, 30}};

// caption templates; {color}/{class}/{size} are substituted per sample
const std::vector<std::string> kCaptionTemplates = {
    "a photo of a {color} {class}",
    "a {size} {color} {class}",
    "an image of a {class}",
    "a {class} on a plain background",
    "the {color} {class}",
    "a picture of a {size} {class}",
};

const std::vector<std::string> kClassTemplates = {
    "a photo of a {class}",
    "an image of a {class}",
    "a picture of a {class}",
    "a {class}",
    "the {class}",
    "a {class} on a plain background",
};

std::string substitute(std::string text, const std::string& key,
                       const std::string& value) {
  const std::string tag = "{" + key + "}";
  size_t at;
  while ((at = text.find(tag)) != std::string::npos)
    text.replace(at, tag.size(), value);
  return text;
}

}  // namespace

CaptionVocab CaptionVocab::standard() {
  CaptionVocab v;
  v.words_ = {"<pad>", "<bos>", "<eos>"};
  const std::vector<std::string> base = {"a",      "an",     "the",   "photo",
                                         "image",  "picture", "of",   "on",
                                         "plain",  "background", "small", "large"};
  for (const auto& w : base) v.words_.push_back(w);
  for (const auto& w : kClassNames) v.words_.push_back(w);
  for (const auto& w : kColorNames) v.words_.push_back(w);
  return v;
}

int32_t CaptionVocab::id(const std::string& word) const {
  for (size_t i = 0; i < words_.size(); ++i)
    if (words_[i] == word) return static_cast<int32_t>(i);
  throw std::invalid_argument("vocab: unknown word '" + word + "'");
}

const std::string& CaptionVocab::word(int32_t id) const {
  if (id < 0 || id >= size())
    throw std::invalid_argument("vocab: id out of range");
  return words_[id];
}

bool CaptionVocab::contains(const std::string& word) const {
  return std::find(words_.begin(), words_.end(), word) != words_.end();
}

std::vector<int32_t> CaptionVocab::tokenize(const std::string& text) const {
  std::vector<int32_t> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(id(w));
  return out;
}

std::vector<int32_t> CaptionVocab::encode(const std::string& text, int len) const {
  if (len < 2) throw std::invalid_argument("vocab: context length must be >= 2");
  std::vector<int32_t> toks = tokenize(text);
  std::vector<int32_t> out;
  out.reserve(len);
  out.push_back(kBos);
  for (int32_t t : toks) out.push_back(t);
  out.push_back(kEos);
  if (static_cast<int>(out.size()) > len) {
    out.resize(len - 1);
    out.push_back(kEos);
  }
  out.resize(len, kPad);
  return out;
}

void CaptionVocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write vocab '" + path + "'");
  for (const auto& w : words_) os << w << "\n";
}

CaptionVocab CaptionVocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read vocab '" + path + "'");
  CaptionVocab v;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) v.words_.push_back(line);
  if (v.size() < 3 || v.words_[0] != "<pad>")
    throw std::runtime_error("vocab '" + path + "': bad format");
  return v;
}

// ------------------------------------------------------------------ scenes

std::string to_string(PlacementMode m) {
  return m == PlacementMode::centered ? "centered" : "uniform";
}

PlacementMode placement_from_string(const std::string& s) {
  if (s == "centered") return PlacementMode::centered;
  if (s == "uniform") return PlacementMode::uniform;
  throw std::invalid_argument("unknown placement mode '" + s + "'");
}

void SynthConfig::validate() const {
  if (image_px < 16) throw std::invalid_argument("synth: image_px too small");
  if (context_len < 2) throw std::invalid_argument("synth: context_len < 2");
  if (!(subject_scale_min > 0) || subject_scale_max < subject_scale_min ||
      subject_scale_max > 0.9)
    throw std::invalid_argument("synth: bad subject scale range");
  if (jitter_sigma < 0) throw std::invalid_argument("synth: jitter_sigma < 0");
  if (clutter < 0) throw std::invalid_argument("synth: clutter < 0");
}

int num_classes() { return static_cast<int>(kClassNames.size()); }
const std::vector<std::string>& class_names() { return kClassNames; }
const std::vector<std::string>& color_names() { return kColorNames; }

std::vector<uint8_t> shape_mask(int class_id, double cx, double cy, double h,
                                int image_px) {
  if (class_id < 0 || class_id >= num_classes())
    throw std::invalid_argument("shape_mask: class_id out of range");
  std::vector<uint8_t> mask(static_cast<size_t>(image_px) * image_px, 0);
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - h)));
  const int x1 = std::min(image_px - 1, static_cast<int>(std::ceil(cx + h)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - h)));
  const int y1 = std::min(image_px - 1, static_cast<int>(std::ceil(cy + h)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      bool on = false;
      switch (class_id) {
        case 0:  // square
          on = std::abs(dx) <= h && std::abs(dy) <= h;
          break;
        case 1:  // disc
          on = dx * dx + dy * dy <= h * h;
          break;
        case 2:  // cross
          on = (std::abs(dx) <= h / 3 && std::abs(dy) <= h) ||
               (std::abs(dy) <= h / 3 && std::abs(dx) <= h);
          break;
        case 3:  // triangle, apex up
          on = dy >= -h && dy <= h && std::abs(dx) <= (dy + h) / 2;
          break;
        case 4: {  // ring
          const double r2 = dx * dx + dy * dy;
          on = r2 <= h * h && r2 >= (0.55 * h) * (0.55 * h);
          break;
        }
        case 5: {  // three vertical bars
          if (std::abs(dx) <= h && std::abs(dy) <= h) {
            const int stripe = static_cast<int>((dx + h) / (2.0 * h / 5.0));
            on = stripe % 2 == 0;
          }
          break;
        }
        case 6:  // diamond
          on = std::abs(dx) + std::abs(dy) <= h;
          break;
        case 7: {  // 3x3 checker
          if (std::abs(dx) <= h && std::abs(dy) <= h) {
            const int ix = static_cast<int>((dx + h) / (2.0 * h / 3.0));
            const int iy = static_cast<int>((dy + h) / (2.0 * h / 3.0));
            on = (std::min(ix, 2) + std::min(iy, 2)) % 2 == 0;
          }
          break;
        }
      }
      if (on) mask[static_cast<size_t>(y) * image_px + x] = 1;
    }
  }
  return mask;
}

namespace {

void paint(ImageU8& img, const std::vector<uint8_t>& mask, Rgb color) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (mask[static_cast<size_t>(y) * img.width + x])
        img.set(x, y, color.r, color.g, color.b);
}

std::string caption_for(Rng& rng, int class_id, int color_id, double scale,
                        const SynthConfig& cfg) {
  const auto& tpl = kCaptionTemplates[rng.below(kCaptionTemplates.size())];
  const double mid = 0.5 * (cfg.subject_scale_min + cfg.subject_scale_max);
  std::string text = substitute(tpl, "class", kClassNames[class_id]);
  text = substitute(text, "color", kColorNames[color_id]);
  text = substitute(text, "size", scale < mid ? "small" : "large");
  return text;
}

}  // namespace

SynthSample generate_one(const SynthConfig& cfg, const CaptionVocab& vocab,
                         uint64_t index) {
  cfg.validate();
  Rng rng(hash_seed(cfg.seed, index));
  const int side = cfg.image_px;

  const int class_id = static_cast<int>(rng.below(num_classes()));
  const int color_id = static_cast<int>(rng.below(kColorNames.size()));
  const int bg_id = static_cast<int>(rng.below(std::size(kBgColors)));
  const double scale =
      rng.uniform(cfg.subject_scale_min, cfg.subject_scale_max);
  const double h = 0.5 * scale * side;
  const double margin = h + 2.0;  // subject fully inside, corners stay clean

  double cx, cy;
  if (cfg.placement == PlacementMode::uniform) {
    cx = rng.uniform(margin, side - margin);
    cy = rng.uniform(margin, side - margin);
  } else {
    const double s = cfg.jitter_sigma * side;
    cx = cy = side / 2.0;
    if (s > 0) {  // truncated gaussian: redraw anything outside the valid box
      for (int tries = 0; tries < 256; ++tries) {
        const double u = rng.normal(side / 2.0, s);
        const double v = rng.normal(side / 2.0, s);
        if (u >= margin && u <= side - margin && v >= margin && v <= side - margin) {
          cx = u;
          cy = v;
          break;
        }
      }
    }
  }

  SynthSample sample;
  sample.image = ImageU8(side, side);
  const Rgb bg = kBgColors[bg_id];
  for (size_t i = 0; i < sample.image.rgb.size(); i += 3) {
    sample.image.rgb[i] = bg.r;
    sample.image.rgb[i + 1] = bg.g;
    sample.image.rgb[i + 2] = bg.b;
  }

  // clutter first so the subject always overdraws it
  for (int c = 0; c < cfg.clutter; ++c) {
    int dcls = static_cast<int>(rng.below(num_classes() - 1));
    if (dcls >= class_id) ++dcls;  // distractors are never the subject class
    const int dcol = static_cast<int>(rng.below(kColorNames.size()));
    const double dh = h * rng.uniform(0.25, 0.4);
    const double dmargin = dh + 1.0;
    const double dx = rng.uniform(dmargin, side - dmargin);
    const double dy = rng.uniform(dmargin, side - dmargin);
    paint(sample.image, shape_mask(dcls, dx, dy, dh, side), kFgColors[dcol]);
  }

  paint(sample.image, shape_mask(class_id, cx, cy, h, side), kFgColors[color_id]);

  sample.class_id = class_id;
  sample.center_u = static_cast<float>(cx);
  sample.center_v = static_cast<float>(cy);
  sample.subject_scale = static_cast<float>(scale);
  sample.tokens =
      vocab.encode(caption_for(rng, class_id, color_id, scale, cfg), cfg.context_len);
  return sample;
}

std::vector<SynthSample> generate(int n, const SynthConfig& cfg,
                                  const CaptionVocab& vocab) {
  if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
  std::vector<SynthSample> out(n);
  for (int i = 0; i < n; ++i) out[i] = generate_one(cfg, vocab, i);
  return out;
}

std::vector<std::vector<std::vector<int32_t>>> class_prompts(
    const CaptionVocab& vocab, const std::vector<std::string>& templates,
    int context_len) {
  if (templates.empty())
    throw std::invalid_argument("class_prompts: templates must be nonempty");
  std::vector<std::vector<std::vector<int32_t>>> out(num_classes());
  for (int c = 0; c < num_classes(); ++c)
    for (const auto& tpl : templates)
      out[c].push_back(
          vocab.encode(substitute(tpl, "class", kClassNames[c]), context_len));
  return out;
}

const std::vector<std::string>& default_class_templates() {
  return kClassTemplates;
}

// ------------------------------------------------------------ dataset file

namespace {

constexpr char kDataMagic[8] = {'C', 'M', 'L', 'D', 'A', 'T', 'A', '1'};
constexpr uint32_t kDataVersion = 1;

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename U>
U get(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("dataset: truncated file");
  return v;
}

std::string vocab_path_for(const std::string& path) {
  return path + ".vocab.txt";
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write dataset '" + path + "'");
  os.write(kDataMagic, sizeof kDataMagic);
  put<uint32_t>(os, kDataVersion);
  put<uint64_t>(os, ds.samples.size());
  put<uint32_t>(os, ds.config.image_px);
  put<uint32_t>(os, 3);
  put<uint32_t>(os, ds.config.context_len);
  put<uint32_t>(os, num_classes());
  put<uint32_t>(os, ds.vocab.size());
  put<uint32_t>(os, static_cast<uint32_t>(ds.config.placement));
  put<double>(os, ds.config.jitter_sigma);
  put<uint64_t>(os, ds.config.seed);
  for (const auto& s : ds.samples) {
    os.write(reinterpret_cast<const char*>(s.image.rgb.data()),
             static_cast<std::streamsize>(s.image.rgb.size()));
    for (int32_t t : s.tokens) put<uint16_t>(os, static_cast<uint16_t>(t));
    put<uint16_t>(os, static_cast<uint16_t>(s.class_id));
    put<float>(os, s.center_u);
    put<float>(os, s.center_v);
  }
  if (!os) throw std::runtime_error("dataset write failed for '" + path + "'");
  ds.vocab.save(vocab_path_for(path));
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read dataset '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kDataMagic, sizeof magic) != 0)
    throw std::runtime_error("'" + path + "' is not a dataset file");
  const auto version = get<uint32_t>(is);
  if (version != kDataVersion)
    throw std::runtime_error("dataset version " + std::to_string(version) +
                             " unsupported");
  Dataset ds;
  const auto n = get<uint64_t>(is);
  ds.config.image_px = static_cast<int>(get<uint32_t>(is));
  const auto channels = get<uint32_t>(is);
  if (channels != 3) throw std::runtime_error("dataset: expected 3 channels");
  ds.config.context_len = static_cast<int>(get<uint32_t>(is));
  const auto ncls = get<uint32_t>(is);
  if (ncls != static_cast<uint32_t>(num_classes()))
    throw std::runtime_error("dataset: class count mismatch");
  const auto vsz = get<uint32_t>(is);
  ds.config.placement = static_cast<PlacementMode>(get<uint32_t>(is));
  ds.config.jitter_sigma = get<double>(is);
  ds.config.seed = get<uint64_t>(is);

  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    s.image = ImageU8(ds.config.image_px, ds.config.image_px);
    is.read(reinterpret_cast<char*>(s.image.rgb.data()),
            static_cast<std::streamsize>(s.image.rgb.size()));
    s.tokens.resize(ds.config.context_len);
    for (auto& t : s.tokens) t = get<uint16_t>(is);
    s.class_id = get<uint16_t>(is);
    s.center_u = get<float>(is);
    s.center_v = get<float>(is);
    if (!is) throw std::runtime_error("dataset: truncated records");
  }
  ds.vocab = CaptionVocab::load(vocab_path_for(path));
  if (ds.vocab.size() != static_cast<int32_t>(vsz))
    throw std::runtime_error("dataset: vocab size mismatch with header");
  return ds;
}

}  // namespace cmlab
