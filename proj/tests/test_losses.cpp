#include <gtest/gtest.h>

#include <cmath>

#include "pdanet/losses.hpp"
#include "support/oracles.hpp"

using namespace pdanet;

namespace {

DensityMap map_of(int h, int w, std::vector<float> v, int stride = 8) {
  DensityMap m(h, w, stride);
  m.values = std::move(v);
  return m;
}

ModelOutput fitted(const DensityTargets& t, double prob) {
  ModelOutput o;
  o.dm_sparse = t.sparse;
  o.dm_dense = t.dense;
  o.dm_final = t.final;
  o.prob = prob;
  return o;
}

DensityTargets targets() {
  DensityTargets t;
  t.sparse = map_of(1, 3, {0.1f, 0.2f, 0.0f});
  t.dense = map_of(1, 3, {0.0f, 1.5f, 2.0f});
  t.final = map_of(1, 3, {0.1f, 1.7f, 2.0f});
  t.label = 1;
  return t;
}

}  // namespace

TEST(DensityLoss, WorkedCases) {
  const auto g = map_of(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(density_loss(g, g), 0.0);
  EXPECT_EQ(density_loss(map_of(2, 2, {2, 3, 4, 5}), g), 1.0);
  EXPECT_EQ(density_loss(map_of(1, 2, {0, 2}), map_of(1, 2, {0, 0})), 2.0);
}

TEST(DensityLoss, ShapeOrStrideMismatch) {
  EXPECT_THROW(density_loss(map_of(1, 2, {0, 0}), map_of(2, 1, {0, 0})), std::invalid_argument);
  EXPECT_THROW(density_loss(map_of(1, 2, {0, 0}, 1), map_of(1, 2, {0, 0}, 8)), std::invalid_argument);
}

TEST(ClassificationLoss, WorkedCases) {
  EXPECT_LE(classification_loss(1.0, 1), 1.2e-7);
  EXPECT_NEAR(classification_loss(0.5, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(classification_loss(0.5, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(classification_loss(0.0, 1), -std::log(1e-7), 1e-12);
  EXPECT_NEAR(classification_loss(0.0, 1), 16.118, 1e-3);
  EXPECT_NEAR(classification_loss(1.0, 0), -std::log(1e-7), 1e-6);
  EXPECT_THROW(classification_loss(0.5, 2), std::invalid_argument);
}

TEST(TotalLoss, ExactFitIsAtTheClipFloor) {
  const auto t = targets();
  const auto b = total_loss(fitted(t, 1.0), t, LossWeights{});
  EXPECT_EQ(b.sparse + b.dense + b.final, 0.0);
  EXPECT_LE(b.total, 1.2e-7);
  EXPECT_GE(b.total, 0.0);
}

TEST(TotalLoss, OnlyClassifierWrong) {
  const auto t = targets();
  LossWeights w;
  w.cls = 2.5;
  EXPECT_NEAR(total_loss(fitted(t, 0.5), t, w).total, 2.5 * std::log(2.0), 1e-15);
}

TEST(TotalLoss, LinearInEachWeight) {
  const auto t = targets();
  ModelOutput o = fitted(t, 0.3);
  o.dm_final.values[1] += 1.0f;
  o.dm_sparse.values[0] += 0.5f;
  const auto base = total_loss(o, t, LossWeights{});
  LossWeights w;
  w.final = 2.0;
  const auto doubled = total_loss(o, t, w);
  EXPECT_NEAR(doubled.total - base.total, base.final, 1e-15);
  EXPECT_EQ(doubled.sparse, base.sparse);
  EXPECT_EQ(doubled.cls, base.cls);
  const auto zero = total_loss(o, t, LossWeights{0, 0, 0, 0});
  EXPECT_EQ(zero.total, 0.0);
  EXPECT_NEAR(base.total, base.sparse + base.dense + base.final + base.cls, 1e-15);
}

TEST(TotalLoss, TapeFormAgreesWithPlainForm) {
  PdanetConfig c;
  c.channel_multiplier = 1.0 / 32.0;
  PdanetModel<double> m(c);
  std::mt19937_64 rng(1);
  const auto img = oracle::random_tensor(Shape{3, 64, 64}, rng);
  DensityTargets t;
  t.sparse = t.dense = t.final = DensityMap(8, 8, 8);
  for (auto* d : {&t.sparse, &t.dense, &t.final}) {
    for (auto& v : d->values) v = static_cast<float>(std::uniform_real_distribution<double>(0, 1)(rng));
  }
  t.label = 0;
  LossWeights w{0.5, 2.0, 1.5, 0.25};
  Tape<double> tape(false);
  auto r = m.forward(tape, tape.constant(img), 0);
  const auto tl = total_loss(tape, r, t, w);
  const auto pl = total_loss(m.predict(img, 0), t, w);
  EXPECT_NEAR(tl.parts.total, pl.total, 1e-6 * std::max(1.0, pl.total));
  EXPECT_NEAR(tl.parts.cls, pl.cls, 1e-12);

  DensityTargets bad = t;
  bad.final = DensityMap(4, 4, 8);
  EXPECT_THROW(total_loss(tape, r, bad, w), std::invalid_argument);
}
