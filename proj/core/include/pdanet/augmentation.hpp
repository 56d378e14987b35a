#pragma once

#include <cstdint>
#include <vector>

#include "pdanet/data_io.hpp"

namespace pdanet {

/// Crops rows [top, top+height) x cols [left, left+width). Points are kept by
/// half-open containment and re-based to the crop origin.
AnnotatedScene crop_scene(const AnnotatedScene& scene, int top, int left, int height, int width);

/// Four corner tiles followed by one seeded random crop of size
/// floor(H/2) x floor(W/2). For odd sizes the bottom/right tiles take the
/// extra row/column so the four corners still partition the image exactly.
std::vector<AnnotatedScene> five_crops(const AnnotatedScene& scene, std::uint64_t rng_seed);

/// Resamples image and annotations to an explicit size.
AnnotatedScene resize_scene(const AnnotatedScene& scene, int height, int width);

/// Portrait (H > W) goes to 1024x768, everything else to 768x1024 (H x W).
AnnotatedScene aspect_resize(const AnnotatedScene& scene);

/// Nearest multiple of `multiple` per axis, never below `minimum`.
int legal_extent(int extent, int multiple = 32, int minimum = 64);
/// Resizes to legal_extent on both axes; a no-op when already legal.
AnnotatedScene legalize_size(const AnnotatedScene& scene, int multiple = 32, int minimum = 64);

}  // namespace pdanet
