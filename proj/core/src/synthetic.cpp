#include "pdanet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace pdanet {
namespace fs = std::filesystem;

namespace {

enum Stream : std::uint64_t {
  kClusterCenter = 1,
  kClusterPick = 2,
  kOffset = 3,
  kTexture = 4,
  kGrain = 5,
  kTint = 6,
};

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double normal_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index, int which) {
  // Box-Muller over two counter draws; `which` picks the cosine or sine leg.
  const double u1 = 1.0 - uniform_draw(seed, stream, 2 * index);
  const double u2 = uniform_draw(seed, stream, 2 * index + 1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return which == 0 ? r * std::cos(a) : r * std::sin(a);
}

// Spatial hash for the separation test.
class PointGrid {
 public:
  explicit PointGrid(double cell) : cell_(cell) {}

  bool clear_of(const Point& p, double min_dist) const {
    const long cx = key(p.x), cy = key(p.y);
    for (long dy = -1; dy <= 1; ++dy) {
      for (long dx = -1; dx <= 1; ++dx) {
        auto it = cells_.find(pack(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (const Point& q : it->second) {
          if (std::hypot(p.x - q.x, p.y - q.y) < min_dist) return false;
        }
      }
    }
    return true;
  }

  void insert(const Point& p) { cells_[pack(key(p.x), key(p.y))].push_back(p); }

 private:
  long key(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  static std::uint64_t pack(long x, long y) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
           static_cast<std::uint32_t>(y);
  }
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<Point>> cells_;
};

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Low-frequency value noise in [0, 1) on an 8 px lattice.
double value_noise(std::uint64_t seed, double x, double y) {
  constexpr double kCell = 8.0;
  const double gx = x / kCell, gy = y / kCell;
  const auto ix = static_cast<std::uint64_t>(gx), iy = static_cast<std::uint64_t>(gy);
  const double fx = smoothstep(gx - ix), fy = smoothstep(gy - iy);
  auto lattice = [&](std::uint64_t a, std::uint64_t b) {
    return uniform_draw(seed, kTexture, (b << 20) ^ a);
  };
  const double top = lattice(ix, iy) * (1 - fx) + lattice(ix + 1, iy) * fx;
  const double bot = lattice(ix, iy + 1) * (1 - fx) + lattice(ix + 1, iy + 1) * fx;
  return top * (1 - fy) + bot * fy;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_people < 0) throw std::invalid_argument("synth: n_people must be >= 0");
  if (height < 64 || width < 64) throw std::invalid_argument("synth: dimensions must be >= 64");
  if (n_clusters < 1) throw std::invalid_argument("synth: n_clusters must be >= 1");
  if (!(cluster_spread > 0)) throw std::invalid_argument("synth: cluster_spread must be > 0");
  if (!(blob_radius > 0)) throw std::invalid_argument("synth: blob_radius must be > 0");
  if (!(min_separation >= 0)) throw std::invalid_argument("synth: min_separation must be >= 0");
}

std::uint64_t hash_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return mix(mix(mix(seed) ^ stream) ^ index);
}

double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return static_cast<double>(hash_draw(seed, stream, index) >> 11) * 0x1.0p-53;
}

std::string scene_id(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%06llu", static_cast<unsigned long long>(seed));
  return buf;
}

AnnotatedScene generate_scene(const SynthSpec& spec) {
  spec.validate();
  AnnotatedScene scene;
  scene.id = scene_id(spec.seed);
  scene.image_path = scene.id + ".png";
  scene.height = spec.height;
  scene.width = spec.width;

  std::vector<Point> centers(spec.n_clusters);
  for (int k = 0; k < spec.n_clusters; ++k) {
    centers[k] = {uniform_draw(spec.seed, kClusterCenter, 2 * k) * spec.width,
                  uniform_draw(spec.seed, kClusterCenter, 2 * k + 1) * spec.height};
  }

  const bool separate = spec.min_separation > 0;
  PointGrid grid(separate ? spec.min_separation : 1.0);
  scene.points.reserve(spec.n_people);
  for (int i = 0; i < spec.n_people; ++i) {
    const auto k = hash_draw(spec.seed, kClusterPick, i) % static_cast<std::uint64_t>(spec.n_clusters);
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetryBudget && !placed; ++attempt) {
      const std::uint64_t idx = static_cast<std::uint64_t>(i) * kPlacementRetryBudget + attempt;
      const Point p{centers[k].x + spec.cluster_spread * normal_draw(spec.seed, kOffset, idx, 0),
                    centers[k].y + spec.cluster_spread * normal_draw(spec.seed, kOffset, idx, 1)};
      if (!(p.x >= 0 && p.x < spec.width && p.y >= 0 && p.y < spec.height)) continue;
      if (separate) {
        if (!grid.clear_of(p, spec.min_separation)) continue;
        grid.insert(p);
      }
      scene.points.push_back(p);
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("synth: could not place head " + std::to_string(i) + " of " +
                               std::to_string(spec.n_people) + " within " +
                               std::to_string(kPlacementRetryBudget) + " attempts");
    }
  }

  // Background: tinted value noise plus per-pixel grain.
  Image img(spec.height, spec.width);
  double tint[3];
  for (int c = 0; c < 3; ++c) tint[c] = 0.85 + 0.3 * uniform_draw(spec.seed, kTint, c);
  std::vector<double> lum(static_cast<std::size_t>(spec.height) * spec.width);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double n = value_noise(spec.seed, x + 0.5, y + 0.5);
      const double grain = uniform_draw(spec.seed, kGrain, static_cast<std::uint64_t>(y) * spec.width + x);
      lum[static_cast<std::size_t>(y) * spec.width + x] = 140.0 + 60.0 * n + 16.0 * (grain - 0.5);
    }
  }

  // Heads: anti-aliased dark discs; coverage is darkness weight per pixel.
  std::vector<double> cover(lum.size(), 0.0);
  const double r = spec.blob_radius;
  for (const Point& p : scene.points) {
    const int y0 = std::max(0, static_cast<int>(std::floor(p.y - r - 1)));
    const int y1 = std::min(spec.height - 1, static_cast<int>(std::ceil(p.y + r + 1)));
    const int x0 = std::max(0, static_cast<int>(std::floor(p.x - r - 1)));
    const int x1 = std::min(spec.width - 1, static_cast<int>(std::ceil(p.x + r + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(x + 0.5 - p.x, y + 0.5 - p.y);
        const double a = std::clamp(r + 0.5 - d, 0.0, 1.0);
        double& cv = cover[static_cast<std::size_t>(y) * spec.width + x];
        cv = std::max(cv, a);
      }
    }
  }
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * spec.width + x;
      for (int c = 0; c < 3; ++c) {
        const double bg = lum[i] * tint[c];
        const double v = bg * (1.0 - 0.85 * cover[i]) + 0.85 * cover[i] * 25.0;
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  scene.image = std::move(img);
  return scene;
}

std::string generate_dataset(const std::vector<SynthSpec>& specs, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw std::runtime_error("synth: cannot create directory " + out_dir);
  }
  std::set<std::string> ids;
  for (const auto& s : specs) {
    if (!ids.insert(scene_id(s.seed)).second) {
      throw std::invalid_argument("synth: duplicate seed " + std::to_string(s.seed));
    }
  }
  std::vector<std::string> entries;
  for (const auto& s : specs) {
    const AnnotatedScene scene = generate_scene(s);
    const fs::path dir(out_dir);
    save_png(scene.image, (dir / scene.image_path).string());
    save_annotations(scene, (dir / (scene.id + ".json")).string());
    entries.push_back(scene.id + ".json");
  }
  const std::string manifest = (fs::path(out_dir) / "manifest.json").string();
  save_manifest(entries, manifest);
  return manifest;
}

}  // namespace pdanet
