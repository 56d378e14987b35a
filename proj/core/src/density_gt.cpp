#include "pdanet/density_gt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pdanet {

std::vector<double> knn_sigma(const std::vector<Point>& points, int k, double beta,
                              double sigma_fixed) {
  if (k < 1) throw std::invalid_argument("knn_sigma: k must be >= 1");
  if (!(beta > 0)) throw std::invalid_argument("knn_sigma: beta must be > 0");
  const std::size_t n = points.size();
  if (n < static_cast<std::size_t>(k) + 1) return std::vector<double>(n, sigma_fixed);

  std::vector<double> sigmas(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dist[j] = (i == j) ? std::numeric_limits<double>::infinity()
                         : std::hypot(points[i].x - points[j].x, points[i].y - points[j].y);
    }
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    std::sort(dist.begin(), dist.begin() + k);
    double mean = 0.0;
    for (int m = 0; m < k; ++m) mean += dist[m];
    mean /= k;
    sigmas[i] = std::max(kSigmaMin, beta * mean);
  }
  return sigmas;
}

DensityMap render_density(const std::vector<Point>& points, const std::vector<double>& sigmas,
                          int height, int width) {
  if (sigmas.size() != points.size()) {
    throw std::invalid_argument("render_density: need one sigma per point");
  }
  if (height < 1 || width < 1) throw std::invalid_argument("render_density: empty grid");
  std::vector<double> acc(static_cast<std::size_t>(height) * width, 0.0);
  std::vector<double> kernel;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double s = sigmas[i];
    if (!(s > 0) || !std::isfinite(s)) {
      throw std::invalid_argument("render_density: sigma must be > 0 (point " + std::to_string(i) + ")");
    }
    const Point& p = points[i];
    const double r = std::ceil(kKernelRadiusSigmas * s);
    const int y0 = std::max(0, static_cast<int>(std::floor(p.y - r)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(p.y + r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(p.x - r)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(p.x + r)));
    if (y0 > y1 || x0 > x1) {
      throw std::invalid_argument("render_density: point " + std::to_string(i) + " outside grid");
    }
    const int kw = x1 - x0 + 1;
    kernel.assign(static_cast<std::size_t>(y1 - y0 + 1) * kw, 0.0);
    const double inv = 1.0 / (2.0 * s * s);
    double total = 0.0;
    for (int y = y0; y <= y1; ++y) {
      const double dy = y + 0.5 - p.y;
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - p.x;
        const double v = std::exp(-(dx * dx + dy * dy) * inv);
        kernel[static_cast<std::size_t>(y - y0) * kw + (x - x0)] = v;
        total += v;
      }
    }
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        acc[static_cast<std::size_t>(y) * width + x] +=
            kernel[static_cast<std::size_t>(y - y0) * kw + (x - x0)] / total;
      }
    }
  }
  DensityMap map(height, width, 1);
  for (std::size_t i = 0; i < acc.size(); ++i) map.values[i] = static_cast<float>(acc[i]);
  return map;
}

DensityMap fixed_sigma_density(const std::vector<Point>& points, int height, int width,
                               double sigma) {
  return render_density(points, std::vector<double>(points.size(), sigma), height, width);
}

DensityMap downsample_preserving_count(const DensityMap& map, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
  const int oh = (map.height + factor - 1) / factor;
  const int ow = (map.width + factor - 1) / factor;
  std::vector<double> acc(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      acc[static_cast<std::size_t>(y / factor) * ow + x / factor] += map.at(y, x);
    }
  }
  DensityMap out(oh, ow, map.stride * factor);
  for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = static_cast<float>(acc[i]);
  return out;
}

DensitySplit split_sparse_dense(const DensityMap& map, double tau, int window) {
  if (!(tau >= 0)) throw std::invalid_argument("split: tau must be >= 0");
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("split: window must be odd");
  const int H = map.height, W = map.width, half = window / 2;
  // Integral image with a zero row/column in front.
  std::vector<double> integral(static_cast<std::size_t>(H + 1) * (W + 1), 0.0);
  auto I = [&](int y, int x) -> double& { return integral[static_cast<std::size_t>(y) * (W + 1) + x]; };
  for (int y = 0; y < H; ++y) {
    double row = 0.0;
    for (int x = 0; x < W; ++x) {
      row += map.at(y, x);
      I(y + 1, x + 1) = I(y, x + 1) + row;
    }
  }
  const double area = static_cast<double>(window) * window;
  DensitySplit out{DensityMap(H, W, map.stride), DensityMap(H, W, map.stride)};
  for (int y = 0; y < H; ++y) {
    const int ya = std::max(0, y - half), yb = std::min(H, y + half + 1);
    for (int x = 0; x < W; ++x) {
      const int xa = std::max(0, x - half), xb = std::min(W, x + half + 1);
      const double box = I(yb, xb) - I(ya, xb) - I(yb, xa) + I(ya, xa);
      const float v = map.at(y, x);
      const float dense = (box / area > tau) ? v : 0.0f;
      out.dense.at(y, x) = dense;
      out.sparse.at(y, x) = v - dense;
    }
  }
  return out;
}

int class_label(const DensityMap& map, double theta) { return map.sum() >= theta ? 1 : 0; }

double mean_positive_density(const std::vector<DensityMap>& maps) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& m : maps) {
    for (float v : m.values) {
      if (v > 0) {
        sum += v;
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double median_count(std::vector<double> counts) {
  if (counts.empty()) throw std::invalid_argument("median_count: no counts");
  std::sort(counts.begin(), counts.end());
  const std::size_t n = counts.size();
  return n % 2 ? counts[n / 2] : 0.5 * (counts[n / 2 - 1] + counts[n / 2]);
}

}  // namespace pdanet
