#pragma once

#include <cstdint>
#include <vector>

#include "madview/common.hpp"

namespace madview {

// Dense CHW image, float values in [0,1]. data[(c*h + y)*w + x].
struct Image {
  int c = 0, h = 0, w = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, 0.f) {}

  float& at(int ci, int y, int x) { return data[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
  float at(int ci, int y, int x) const { return data[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
  std::size_t size() const { return data.size(); }
};

// Bilinear resize with half-pixel centre alignment. Values stay in [0,1];
// an image already at the target size is returned unchanged.
Image resize_bilinear(const Image& src, int target_h, int target_w);

// Round-trip exact for values of the form k/255.
std::vector<std::uint8_t> to_u8(const Image& img);
Image from_u8(const std::vector<std::uint8_t>& bytes, int c, int h, int w);

// Quantize in place to the 8-bit grid (k/255), matching replay storage.
void quantize_u8(Image& img);

}  // namespace madview
