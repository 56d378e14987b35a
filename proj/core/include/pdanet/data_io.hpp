#pragma once

#include <string>
#include <vector>

#include "pdanet/image.hpp"

namespace pdanet {

/// Head annotation in continuous pixel coordinates; x is the column, y the
/// row, origin top-left. A point belongs to pixel (floor(y), floor(x)).
struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// An image plus its head annotations. `image` may be empty when only the
/// annotations were loaded; `height`/`width` are always set.
struct AnnotatedScene {
  std::string id;
  std::string image_path;  // relative to the annotation file
  int height = 0;
  int width = 0;
  std::vector<Point> points;
  Image image;

  /// Throws std::invalid_argument on non-positive dims or an out-of-bounds
  /// point (message names the index of the first offending point).
  void validate() const;

  friend bool operator==(const AnnotatedScene&, const AnnotatedScene&) = default;
};

/// Non-negative people-per-cell grid. `stride` is the number of source
/// pixels per cell along each axis.
struct DensityMap {
  int height = 0;
  int width = 0;
  int stride = 1;
  std::vector<float> values;

  DensityMap() = default;
  DensityMap(int h, int w, int s = 1)
      : height(h), width(w), stride(s), values(static_cast<std::size_t>(h) * w, 0.0f) {}

  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

  /// Sum accumulated in double.
  double sum() const;

  friend bool operator==(const DensityMap&, const DensityMap&) = default;
};

/// Reads the annotation JSON; the referenced image is not loaded.
AnnotatedScene load_annotations(const std::string& path);
/// Reads the annotation JSON and the image it references.
AnnotatedScene load_scene(const std::string& path);
/// Writes the annotation JSON. The image (if any) is written separately.
void save_annotations(const AnnotatedScene& scene, const std::string& path);

/// `PDM1` | u32 H | u32 W | u32 stride | H*W float32, all little-endian.
void save_density_map(const DensityMap& map, const std::string& path);
DensityMap load_density_map(const std::string& path);

/// Manifest: JSON list of annotation paths relative to the manifest file.
void save_manifest(const std::vector<std::string>& entries, const std::string& path);
/// Returns the entries resolved against the manifest directory.
std::vector<std::string> load_manifest(const std::string& path);

}  // namespace pdanet
