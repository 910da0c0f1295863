#include "madview/image.hpp"

#include <algorithm>
#include <cmath>

namespace madview {

Image resize_bilinear(const Image& src, int target_h, int target_w) {
  if (src.c <= 0 || src.h <= 0 || src.w <= 0 || src.data.size() != src.size())
    throw ValidationError("resize_bilinear: input is not a valid image");
  if (target_h <= 0 || target_w <= 0)
    throw ValidationError("resize_bilinear: target size must be positive");
  if (src.h == target_h && src.w == target_w) return src;

  Image out(src.c, target_h, target_w);
  const float sy = static_cast<float>(src.h) / static_cast<float>(target_h);
  const float sx = static_cast<float>(src.w) / static_cast<float>(target_w);
  for (int y = 0; y < target_h; ++y) {
    float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    fy = std::clamp(fy, 0.f, static_cast<float>(src.h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const float wy = fy - static_cast<float>(y0);
    for (int x = 0; x < target_w; ++x) {
      float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      fx = std::clamp(fx, 0.f, static_cast<float>(src.w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const float wx = fx - static_cast<float>(x0);
      for (int c = 0; c < src.c; ++c) {
        const float v00 = src.at(c, y0, x0), v01 = src.at(c, y0, x1);
        const float v10 = src.at(c, y1, x0), v11 = src.at(c, y1, x1);
        const float top = v00 + (v01 - v00) * wx;
        const float bot = v10 + (v11 - v10) * wx;
        out.at(c, y, x) = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> to_u8(const Image& img) {
  std::vector<std::uint8_t> bytes(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.f, 1.f);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.f));
  }
  return bytes;
}

Image from_u8(const std::vector<std::uint8_t>& bytes, int c, int h, int w) {
  if (bytes.size() != static_cast<std::size_t>(c) * h * w)
    throw ValidationError("from_u8: byte count does not match dimensions");
  Image img(c, h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.data[i] = static_cast<float>(bytes[i]) / 255.f;
  return img;
}

void quantize_u8(Image& img) {
  for (float& v : img.data) {
    const float cv = std::clamp(v, 0.f, 1.f);
    v = static_cast<float>(std::lround(cv * 255.f)) / 255.f;
  }
}

}  // namespace madview
