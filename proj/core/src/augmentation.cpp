#include "pdanet/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pdanet/synthetic.hpp"

namespace pdanet {

AnnotatedScene crop_scene(const AnnotatedScene& scene, int top, int left, int height, int width) {
  if (height < 1 || width < 1 || top < 0 || left < 0 || top + height > scene.height ||
      left + width > scene.width) {
    throw std::invalid_argument("crop: window outside scene " + scene.id);
  }
  AnnotatedScene out;
  out.id = scene.id + "@" + std::to_string(top) + "," + std::to_string(left) + "," +
           std::to_string(height) + "x" + std::to_string(width);
  out.image_path = scene.image_path;
  out.height = height;
  out.width = width;
  for (const Point& p : scene.points) {
    if (p.y >= top && p.y < top + height && p.x >= left && p.x < left + width) {
      out.points.push_back({p.x - left, p.y - top});
    }
  }
  if (!scene.image.empty()) {
    out.image = Image(height, width);
    for (int y = 0; y < height; ++y) {
      const auto* src = &scene.image.pixels[(static_cast<std::size_t>(top + y) * scene.width + left) * 3];
      std::copy(src, src + static_cast<std::size_t>(width) * 3,
                &out.image.pixels[static_cast<std::size_t>(y) * width * 3]);
    }
  }
  return out;
}

std::vector<AnnotatedScene> five_crops(const AnnotatedScene& scene, std::uint64_t rng_seed) {
  if (scene.height < 2 || scene.width < 2) {
    throw std::invalid_argument("five_crops: scene " + scene.id + " is smaller than 2x2");
  }
  const int h = scene.height / 2, w = scene.width / 2;
  const int hb = scene.height - h, wr = scene.width - w;
  std::vector<AnnotatedScene> crops;
  crops.reserve(5);
  crops.push_back(crop_scene(scene, 0, 0, h, w));
  crops.push_back(crop_scene(scene, 0, w, h, wr));
  crops.push_back(crop_scene(scene, h, 0, hb, w));
  crops.push_back(crop_scene(scene, h, w, hb, wr));
  const int top = static_cast<int>(hash_draw(rng_seed, 0x5eedc0deull, 0) %
                                   static_cast<std::uint64_t>(scene.height - h + 1));
  const int left = static_cast<int>(hash_draw(rng_seed, 0x5eedc0deull, 1) %
                                    static_cast<std::uint64_t>(scene.width - w + 1));
  crops.push_back(crop_scene(scene, top, left, h, w));
  return crops;
}

AnnotatedScene resize_scene(const AnnotatedScene& scene, int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("resize: target must be positive");
  AnnotatedScene out;
  out.id = scene.id;
  out.image_path = scene.image_path;
  out.height = height;
  out.width = width;
  const double sy = static_cast<double>(height) / scene.height;
  const double sx = static_cast<double>(width) / scene.width;
  out.points.reserve(scene.points.size());
  for (const Point& p : scene.points) {
    // Keep the half-open domain under rounding.
    const double x = std::min(p.x * sx, std::nextafter(static_cast<double>(width), 0.0));
    const double y = std::min(p.y * sy, std::nextafter(static_cast<double>(height), 0.0));
    out.points.push_back({x, y});
  }
  if (!scene.image.empty()) out.image = resize_bilinear(scene.image, height, width);
  return out;
}

AnnotatedScene aspect_resize(const AnnotatedScene& scene) {
  if (scene.height > scene.width) return resize_scene(scene, 1024, 768);
  return resize_scene(scene, 768, 1024);
}

int legal_extent(int extent, int multiple, int minimum) {
  const int rounded = static_cast<int>(std::lround(static_cast<double>(extent) / multiple)) * multiple;
  return std::max(minimum, rounded);
}

AnnotatedScene legalize_size(const AnnotatedScene& scene, int multiple, int minimum) {
  const int h = legal_extent(scene.height, multiple, minimum);
  const int w = legal_extent(scene.width, multiple, minimum);
  if (h == scene.height && w == scene.width) return scene;
  return resize_scene(scene, h, w);
}

}  // namespace pdanet
