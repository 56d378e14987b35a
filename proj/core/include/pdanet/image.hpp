#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdanet/tensor.hpp"

namespace pdanet {

/// 8-bit interleaved RGB image, row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  Image() = default;
  Image(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  bool empty() const { return pixels.empty(); }
  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

Image load_png(const std::string& path);
void save_png(const Image& image, const std::string& path);
/// Single-channel 8-bit PNG.
void save_gray_png(const std::vector<std::uint8_t>& gray, int height, int width,
                   const std::string& path);

/// Half-pixel aligned bilinear resampling.
Image resize_bilinear(const Image& image, int height, int width);

/// Converts to a (3,H,W) tensor normalised with the ImageNet channel statistics.
template <typename T>
Tensor<T> image_to_tensor(const Image& image);

}  // namespace pdanet
