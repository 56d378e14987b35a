#pragma once

#include <utility>
#include <vector>

#include "pdanet/data_io.hpp"

namespace pdanet {

/// Lower bound on kernel width; coincident heads would otherwise give sigma 0.
inline constexpr double kSigmaMin = 0.5;
/// Kernels are evaluated within this many sigmas of the head, then clipped to
/// the image and renormalised.
inline constexpr double kKernelRadiusSigmas = 4.0;

/// Geometry-adaptive widths: beta times the mean distance to the k nearest
/// other heads, clamped to kSigmaMin. With fewer than k+1 heads every width
/// falls back to `sigma_fixed`.
std::vector<double> knn_sigma(const std::vector<Point>& points, int k = 3, double beta = 0.3,
                              double sigma_fixed = 15.0);

/// Sum of per-head Gaussians, each clipped to the image and renormalised so
/// its cells sum to exactly one. Samples are taken at pixel centres.
DensityMap render_density(const std::vector<Point>& points, const std::vector<double>& sigmas,
                          int height, int width);

DensityMap fixed_sigma_density(const std::vector<Point>& points, int height, int width,
                               double sigma = 15.0);

/// Each output cell is the sum of a factor x factor block. Sizes that do not
/// divide are zero-padded on the bottom/right.
DensityMap downsample_preserving_count(const DensityMap& map, int factor);

struct DensitySplit {
  DensityMap sparse;
  DensityMap dense;
};

/// Cells whose `window` x `window` box mean (zero padded) exceeds `tau` go to
/// the dense part, the rest to the sparse part. sparse + dense == map exactly.
DensitySplit split_sparse_dense(const DensityMap& map, double tau, int window = 15);

/// 1 (dense) iff the map sums to at least `theta`.
int class_label(const DensityMap& map, double theta);

/// Mean over all strictly positive cells of the given maps (0 when none).
double mean_positive_density(const std::vector<DensityMap>& maps);

/// Median of the counts (average of the middle pair for even sizes).
double median_count(std::vector<double> counts);

}  // namespace pdanet
