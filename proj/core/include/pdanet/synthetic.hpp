#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdanet/data_io.hpp"

namespace pdanet {

/// Parameters of one synthetic crowd scene. The scene id is derived from the
/// seed, so distinct seeds give distinct files.
struct SynthSpec {
  std::uint64_t seed = 0;
  int n_people = 0;
  int height = 128;
  int width = 128;
  int n_clusters = 3;
  double cluster_spread = 16.0;
  double blob_radius = 2.5;
  double min_separation = 1.0;  // minimum distance between two heads, px

  void validate() const;
};

/// Attempts allowed per head before placement gives up.
inline constexpr int kPlacementRetryBudget = 256;

/// Counter-based generator: every draw is a pure function of (seed, stream, index).
std::uint64_t hash_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);
/// Uniform in [0, 1) with 53 random bits.
double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

std::string scene_id(std::uint64_t seed);

/// Renders clustered heads as dark discs over a textured background.
/// Throws std::runtime_error when a head cannot be placed within
/// kPlacementRetryBudget attempts (scene too crowded for min_separation).
AnnotatedScene generate_scene(const SynthSpec& spec);

/// Writes `<id>.png`, `<id>.json` per spec and `manifest.json`; returns the
/// manifest path.
std::string generate_dataset(const std::vector<SynthSpec>& specs, const std::string& out_dir);

}  // namespace pdanet
