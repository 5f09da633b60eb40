// 8-bit RGB images, binary PPM (P6) io, and patch-mask rendering.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmlab/mask.hpp"

namespace cmlab {

struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  ImageU8() = default;
  ImageU8(int w, int h) : width(w), height(h), rgb(3u * w * h, 0) {}

  uint8_t* px(int x, int y) { return rgb.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const uint8_t* px(int x, int y) const {
    return rgb.data() + 3 * (static_cast<size_t>(y) * width + x);
  }
  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    auto* p = px(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);

// Copies kept patches through and blacks out masked ones. The image must be
// exactly (cols*patch_px) x (rows*patch_px).
ImageU8 render_mask(const MaskPlan& plan, const PatchGrid& grid,
                    const ImageU8& image, int patch_px);

}  // namespace cmlab
