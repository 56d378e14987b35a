#include <gtest/gtest.h>

#include <random>

#include "pdanet/density_gt.hpp"
#include "support/oracles.hpp"

using namespace pdanet;

namespace {

std::vector<Point> random_points(std::mt19937_64& rng, int n, int h, int w) {
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h);
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i) pts.push_back({ux(rng), uy(rng)});
  return pts;
}

// Pairwise distances, sorted, first k averaged.
double brute_knn(const std::vector<Point>& pts, std::size_t i, int k) {
  std::vector<double> d;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (j != i) d.push_back(std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y));
  }
  std::sort(d.begin(), d.end());
  double s = 0;
  for (int m = 0; m < k; ++m) s += d[m];
  return s / k;
}

DensityMap random_map(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  DensityMap m(h, w);
  for (auto& v : m.values) v = u(rng);
  return m;
}

}  // namespace

TEST(KnnSigma, SquareCorners) {
  const std::vector<Point> sq = {{0, 0}, {10, 0}, {0, 10}, {10, 10}};
  const auto s = knn_sigma(sq, 3, 0.3);
  const double expect = 0.3 * brute_knn(sq, 0, 3);
  ASSERT_EQ(s.size(), 4u);
  for (double v : s) {
    EXPECT_NEAR(v, expect, 1e-12);
    EXPECT_NEAR(v, 3.41421, 1e-5);
  }
}

TEST(KnnSigma, MatchesPairwiseOracleOnRandomSets) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = random_points(rng, 4 + trial * 3, 200, 300);
    for (int k : {1, 3, 4}) {
      const auto s = knn_sigma(pts, k, 0.3);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const bool enough = pts.size() >= static_cast<std::size_t>(k) + 1;
        EXPECT_NEAR(s[i], enough ? std::max(kSigmaMin, 0.3 * brute_knn(pts, i, k)) : 15.0, 1e-9);
      }
    }
  }
}

TEST(KnnSigma, TooFewPointsFallBackToFixed) {
  const auto s = knn_sigma({{0, 0}, {6, 0}}, 3, 0.3, 15.0);
  EXPECT_EQ(s, (std::vector<double>{15.0, 15.0}));
  EXPECT_TRUE(knn_sigma({}, 3).empty());
}

TEST(KnnSigma, CoincidentPointsClampToMinimum) {
  const auto s = knn_sigma({{5, 5}, {5, 5}, {5, 5}, {5, 5}}, 3, 0.3);
  for (double v : s) EXPECT_EQ(v, kSigmaMin);
}

TEST(RenderDensity, CentredPointSumsToOne) {
  EXPECT_NEAR(render_density({{32, 32}}, {2.0}, 64, 64).sum(), 1.0, 1e-6);
}

TEST(RenderDensity, CornerPointStillSumsToOne) {
  EXPECT_NEAR(render_density({{0, 0}}, {5.0}, 64, 64).sum(), 1.0, 1e-6);
  EXPECT_NEAR(render_density({{63.99, 63.99}}, {5.0}, 64, 64).sum(), 1.0, 1e-6);
}

TEST(RenderDensity, HundredRandomPoints) {
  std::mt19937_64 rng(2);
  const auto pts = random_points(rng, 100, 96, 128);
  const auto map = render_density(pts, knn_sigma(pts), 96, 128);
  EXPECT_NEAR(map.sum(), 100.0, 1e-4);
  for (float v : map.values) EXPECT_GE(v, 0.0f);
}

TEST(RenderDensity, MatchesDirectGaussianOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = random_points(rng, 1 + trial * 2, 40, 50);
    std::vector<double> sig;
    std::uniform_real_distribution<double> us(0.5, 6.0);
    for (std::size_t i = 0; i < pts.size(); ++i) sig.push_back(us(rng));
    const auto map = render_density(pts, sig, 40, 50);
    const auto ref = oracle::brute_density(pts, sig, 40, 50);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(map.values[i], ref[i], 1e-6);
  }
}

TEST(RenderDensity, CountConservationProperty) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = static_cast<int>(rng() % 200);
    const int h = 16 + static_cast<int>(rng() % 100), w = 16 + static_cast<int>(rng() % 100);
    const auto pts = random_points(rng, n, h, w);
    EXPECT_NEAR(render_density(pts, knn_sigma(pts), h, w).sum(), n, 1e-6 * std::max(1, n));
  }
}

TEST(RenderDensity, Errors) {
  EXPECT_THROW(render_density({{1, 1}}, {0.0}, 8, 8), std::invalid_argument);
  EXPECT_THROW(render_density({{1, 1}}, {-1.0}, 8, 8), std::invalid_argument);
  EXPECT_THROW(render_density({{1, 1}}, {}, 8, 8), std::invalid_argument);
}

TEST(FixedSigma, EmptyAndSingle) {
  const auto empty = fixed_sigma_density({}, 20, 30);
  EXPECT_EQ(empty.sum(), 0.0);
  EXPECT_EQ(empty.height, 20);
  EXPECT_NEAR(fixed_sigma_density({{10, 10}}, 64, 64).sum(), 1.0, 1e-6);
}

TEST(FixedSigma, TwoFarPointsPeakAtTheirPixels) {
  const std::vector<Point> pts = {{30.5, 40.5}, {170.5, 100.5}};
  const auto map = fixed_sigma_density(pts, 160, 220, 15.0);
  // Local maxima found by brute scan of each half.
  for (const auto& p : pts) {
    int by = -1, bx = -1;
    float best = -1;
    for (int y = 0; y < map.height; ++y) {
      for (int x = 0; x < map.width; ++x) {
        if ((x < 100) != (p.x < 100)) continue;
        if (map.at(y, x) > best) best = map.at(y, x), by = y, bx = x;
      }
    }
    EXPECT_EQ(by, static_cast<int>(p.y));
    EXPECT_EQ(bx, static_cast<int>(p.x));
  }
}

TEST(Downsample, AllOnesBlock) {
  DensityMap m(8, 8);
  std::fill(m.values.begin(), m.values.end(), 1.0f);
  const auto d = downsample_preserving_count(m, 8);
  ASSERT_EQ(d.values.size(), 1u);
  EXPECT_EQ(d.values[0], 64.0f);
  EXPECT_EQ(d.stride, 8);
}

TEST(Downsample, FactorOneIsIdentity) {
  std::mt19937_64 rng(5);
  const auto m = random_map(rng, 7, 9);
  EXPECT_EQ(downsample_preserving_count(m, 1), m);
}

TEST(Downsample, RandomMapKeepsTotalAndBlockSums) {
  std::mt19937_64 rng(6);
  const auto m = random_map(rng, 96, 128);
  const auto d = downsample_preserving_count(m, 8);
  ASSERT_EQ(d.height, 12);
  ASSERT_EQ(d.width, 16);
  EXPECT_NEAR(d.sum(), m.sum(), 1e-5 * m.sum());
  for (int by = 0; by < 12; ++by) {
    for (int bx = 0; bx < 16; ++bx) {
      double s = 0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) s += m.at(by * 8 + y, bx * 8 + x);
      EXPECT_NEAR(d.at(by, bx), s, 1e-5);
    }
  }
}

TEST(Downsample, IndivisibleSizesArePadded) {
  DensityMap m(10, 9);
  std::fill(m.values.begin(), m.values.end(), 1.0f);
  const auto d = downsample_preserving_count(m, 4);
  EXPECT_EQ(d.height, 3);
  EXPECT_EQ(d.width, 3);
  EXPECT_EQ(d.sum(), 90.0);
  EXPECT_EQ(d.at(2, 2), 2.0f);
  EXPECT_THROW(downsample_preserving_count(m, 0), std::invalid_argument);
}

TEST(Split, PlateausSeparate) {
  DensityMap m(20, 40);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 40; ++x) m.at(y, x) = x < 20 ? 0.1f : 5.0f;
  const auto s = split_sparse_dense(m, 1.0, 3);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 40; ++x) {
      if (x < 19) {
        EXPECT_EQ(s.dense.at(y, x), 0.0f);
        EXPECT_EQ(s.sparse.at(y, x), 0.1f);
      } else if (x >= 20) {
        EXPECT_EQ(s.dense.at(y, x), 5.0f);
        EXPECT_EQ(s.sparse.at(y, x), 0.0f);
      }
    }
  }
}

TEST(Split, LargeTauIsAllSparseZeroTauAllDense) {
  std::mt19937_64 rng(7);
  const auto m = random_map(rng, 30, 30);
  const auto hi = split_sparse_dense(m, 2.0);
  EXPECT_EQ(hi.sparse, m);
  EXPECT_EQ(hi.dense.sum(), 0.0);
  const auto lo = split_sparse_dense(m, 0.0);
  EXPECT_EQ(lo.dense, m);
}

TEST(Split, ReconstructionIsExact) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_map(rng, 10 + trial, 30 - trial);
    const auto s = split_sparse_dense(m, 0.5, 5);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      EXPECT_EQ(s.sparse.values[i] + s.dense.values[i], m.values[i]);
      EXPECT_GE(s.sparse.values[i], 0.0f);
      EXPECT_GE(s.dense.values[i], 0.0f);
    }
  }
  EXPECT_THROW(split_sparse_dense(DensityMap(2, 2), -1.0), std::invalid_argument);
}

TEST(ClassLabel, InclusiveThreshold) {
  DensityMap m(1, 1);
  m.values = {300};
  EXPECT_EQ(class_label(m, 200), 1);
  m.values = {50};
  EXPECT_EQ(class_label(m, 200), 0);
  m.values = {200};
  EXPECT_EQ(class_label(m, 200), 1);
}

TEST(ClassLabel, MonotoneInSum) {
  DensityMap m(1, 1);
  int prev = 0;
  for (int v = 0; v <= 400; ++v) {
    m.values = {static_cast<float>(v)};
    const int l = class_label(m, 123.5);
    EXPECT_GE(l, prev);
    prev = l;
  }
}

TEST(Thresholds, MedianAndMeanPositive) {
  EXPECT_EQ(median_count({5, 1, 3}), 3.0);
  EXPECT_EQ(median_count({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median_count({}), std::invalid_argument);
  DensityMap a(1, 3), b(1, 2);
  a.values = {0, 2, 4};
  b.values = {0, 6};
  EXPECT_EQ(mean_positive_density({a, b}), 4.0);
  EXPECT_EQ(mean_positive_density({DensityMap(2, 2)}), 0.0);
}
