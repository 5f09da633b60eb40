#include "cmlab/image.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cmlab {

void write_ppm(const std::string& path, const ImageU8& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()),
           static_cast<std::streamsize>(img.rgb.size()));
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

ImageU8 read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::string magic;
  int w, h, maxval;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255)
    throw std::runtime_error("'" + path + "' is not a 8-bit P6 PPM");
  is.get();  // single whitespace after header
  ImageU8 img(w, h);
  is.read(reinterpret_cast<char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  if (!is) throw std::runtime_error("truncated PPM '" + path + "'");
  return img;
}

ImageU8 render_mask(const MaskPlan& plan, const PatchGrid& grid,
                    const ImageU8& image, int patch_px) {
  grid.validate();
  plan.validate();
  if (plan.total != grid.total())
    throw std::invalid_argument("render_mask: plan/grid patch count mismatch");
  if (image.width != grid.cols * patch_px || image.height != grid.rows * patch_px)
    throw std::invalid_argument("render_mask: image is " +
                                std::to_string(image.width) + "x" +
                                std::to_string(image.height) + ", grid needs " +
                                std::to_string(grid.cols * patch_px) + "x" +
                                std::to_string(grid.rows * patch_px));
  ImageU8 out(image.width, image.height);
  for (int32_t idx : plan.kept) {
    const int pr = idx / grid.cols, pc = idx % grid.cols;
    for (int y = pr * patch_px; y < (pr + 1) * patch_px; ++y) {
      const uint8_t* src = image.px(pc * patch_px, y);
      std::memcpy(out.px(pc * patch_px, y), src, 3u * patch_px);
    }
  }
  return out;
}

}  // namespace cmlab
