#include <gtest/gtest.h>

#include <random>

#include "pdanet/autograd.hpp"
#include "support/oracles.hpp"

using namespace pdanet;
using oracle::fd_check;
using oracle::random_tensor;

namespace {

constexpr double kTol = 1e-6;

std::mt19937_64& rng() {
  static std::mt19937_64 r(1234);
  return r;
}

Tensor<double> away_from_zero(Shape s) {
  // Values bounded away from the rectifier kink.
  auto t = random_tensor(s, rng());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += t[i] >= 0 ? 0.1 : -0.1;
  return t;
}

}  // namespace

TEST(Tensor, IndexingIsChannelMajor) {
  Tensor<float> t(2, 3, 4);
  t(1, 2, 3) = 5.0f;
  EXPECT_EQ(t[1 * 12 + 2 * 4 + 3], 5.0f);
  EXPECT_EQ(t.shape().numel(), 24u);
  EXPECT_DOUBLE_EQ(t.sum(), 5.0);
}

TEST(Tensor, AddRejectsShapeMismatch) {
  Tensor<float> a(1, 2, 2), b(1, 2, 3);
  EXPECT_THROW(a.add(b), std::invalid_argument);
}

TEST(Conv2d, ForwardMatchesNestedLoops) {
  for (int dil : {1, 2, 3}) {
    for (int k : {1, 3}) {
      Conv2d<double> conv("c", 3, 4, k, dil);
      InitRng init(dil * 10 + k);
      conv.init(init);
      for (std::size_t i = 0; i < conv.bias.value.size(); ++i) conv.bias.value[i] = 0.1 * (i + 1);
      auto x = random_tensor(Shape{3, 7, 9}, rng());
      Tape<double> tape(false);
      auto y = ops::conv2d(tape, tape.constant(x), conv);
      auto ref = oracle::brute_conv(x, conv.weight.value, conv.bias.value, k, dil);
      EXPECT_LT(oracle::rel_err(y->value, ref), 1e-12) << "k=" << k << " dil=" << dil;
    }
  }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  for (int dil : {1, 2}) {
    Conv2d<double> conv("c", 2, 3, 3, dil);
    InitRng init(5);
    conv.init(init);
    const double err = fd_check(
        [&](Tape<double>& t, const std::vector<Var<double>>& v) { return ops::conv2d(t, v[0], conv); },
        {random_tensor(Shape{2, 5, 6}, rng())}, {&conv.weight, &conv.bias});
    EXPECT_LT(err, kTol) << "dilation " << dil;
  }
}

TEST(Linear, GradientMatchesFiniteDifferences) {
  Linear<double> fc("fc", 5, 3);
  InitRng init(3);
  fc.init(init);
  const double err = fd_check(
      [&](Tape<double>& t, const std::vector<Var<double>>& v) { return ops::linear(t, v[0], fc); },
      {random_tensor(Shape{5, 1, 1}, rng())}, {&fc.weight, &fc.bias});
  EXPECT_LT(err, kTol);
}

TEST(Ops, ElementwiseGradients) {
  const Shape s{2, 3, 4};
  auto unary = [&](auto op) {
    return fd_check([op](Tape<double>& t, const std::vector<Var<double>>& v) { return op(t, v[0]); },
                    {away_from_zero(s)});
  };
  EXPECT_LT(unary([](Tape<double>& t, const Var<double>& x) { return ops::relu(t, x); }), kTol);
  EXPECT_LT(unary([](Tape<double>& t, const Var<double>& x) { return ops::sigmoid(t, x); }), kTol);
  EXPECT_LT(unary([](Tape<double>& t, const Var<double>& x) { return ops::scale(t, x, 2.5); }), kTol);

  auto binary = [&](auto op, Shape sb) {
    return fd_check([op](Tape<double>& t, const std::vector<Var<double>>& v) { return op(t, v[0], v[1]); },
                    {away_from_zero(s), away_from_zero(sb)});
  };
  EXPECT_LT(binary([](Tape<double>& t, const Var<double>& a, const Var<double>& b) { return ops::add(t, a, b); }, s),
            kTol);
  EXPECT_LT(binary([](Tape<double>& t, const Var<double>& a, const Var<double>& b) { return ops::mul(t, a, b); }, s),
            kTol);
  EXPECT_LT(binary([](Tape<double>& t, const Var<double>& a,
                      const Var<double>& b) { return ops::maximum(t, a, b); },
                   s),
            kTol);
  EXPECT_LT(binary([](Tape<double>& t, const Var<double>& a,
                      const Var<double>& b) { return ops::mul_channel(t, a, b); },
                   Shape{2, 1, 1}),
            kTol);
  EXPECT_LT(binary([](Tape<double>& t, const Var<double>& a,
                      const Var<double>& b) { return ops::mul_spatial(t, a, b); },
                   Shape{1, 3, 4}),
            kTol);
}

TEST(Ops, PoolingAndResamplingGradients) {
  auto x = random_tensor(Shape{2, 7, 9}, rng());
  EXPECT_LT(fd_check([](Tape<double>& t, const std::vector<Var<double>>& v) { return ops::max_pool2(t, v[0]); },
                     {x}),
            kTol);
  for (auto [oh, ow] : {std::pair{3, 4}, std::pair{2, 2}, std::pair{7, 9}, std::pair{1, 1}}) {
    EXPECT_LT(fd_check([oh = oh, ow = ow](Tape<double>& t, const std::vector<Var<double>>& v) {
                return ops::adaptive_avg_pool(t, v[0], oh, ow);
              },
                       {x}),
              kTol);
  }
  for (auto [oh, ow] : {std::pair{14, 18}, std::pair{8, 8}, std::pair{7, 9}}) {
    EXPECT_LT(fd_check([oh = oh, ow = ow](Tape<double>& t, const std::vector<Var<double>>& v) {
                return ops::upsample_bilinear(t, v[0], oh, ow);
              },
                       {x}),
              kTol);
  }
}

TEST(Ops, ConcatAndLossGradients) {
  EXPECT_LT(fd_check([](Tape<double>& t, const std::vector<Var<double>>& v) {
              return ops::concat_channels(t, {v[0], v[1], v[2]});
            },
                     {random_tensor(Shape{1, 3, 3}, rng()), random_tensor(Shape{2, 3, 3}, rng()),
                      random_tensor(Shape{3, 3, 3}, rng())}),
            kTol);
  const auto target = random_tensor(Shape{1, 4, 4}, rng());
  EXPECT_LT(fd_check([&](Tape<double>& t, const std::vector<Var<double>>& v) { return ops::mse(t, v[0], target); },
                     {random_tensor(Shape{1, 4, 4}, rng())}),
            kTol);
  for (int label : {0, 1}) {
    Tensor<double> p(Shape{1, 1, 1}, 0.3);
    EXPECT_LT(fd_check([label](Tape<double>& t, const std::vector<Var<double>>& v) {
                return ops::bce(t, v[0], label);
              },
                       {p}),
              kTol);
  }
}

TEST(Ops, AdaptivePoolAveragesFloorCeilBins) {
  Tensor<double> x(Shape{1, 5, 1});
  for (int i = 0; i < 5; ++i) x(0, i, 0) = i;
  Tape<double> tape(false);
  auto y = ops::adaptive_avg_pool(tape, tape.constant(x), 2, 1);
  // bins [0, 3) and [2, 5)
  EXPECT_DOUBLE_EQ(y->value(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y->value(0, 1, 0), 3.0);
}

TEST(Ops, UpsampleOfConstantIsConstant) {
  Tensor<double> x(Shape{1, 2, 3}, 4.25);
  Tape<double> tape(false);
  auto y = ops::upsample_bilinear(tape, tape.constant(x), 8, 12);
  for (std::size_t i = 0; i < y->value.size(); ++i) EXPECT_DOUBLE_EQ(y->value[i], 4.25);
}

TEST(Ops, MaximumTiesRouteGradientToFirstArgument) {
  Tape<double> tape;
  auto a = tape.leaf(Tensor<double>(Shape{1, 1, 2}, 1.0));
  auto b = tape.leaf(Tensor<double>(Shape{1, 1, 2}, 1.0));
  auto m = ops::maximum(tape, a, b);
  tape.backward(ops::mse(tape, m, Tensor<double>(Shape{1, 1, 2}, 0.0)));
  EXPECT_DOUBLE_EQ(a->grad[0], 1.0);
  EXPECT_TRUE(b->grad.empty() || b->grad[0] == 0.0);
}

TEST(Ops, BceClipsProbability) {
  Tape<double> tape;
  auto p = tape.leaf(Tensor<double>(Shape{1, 1, 1}, 0.0));
  auto loss = ops::bce(tape, p, 1);
  EXPECT_NEAR(loss->value[0], -std::log(1e-7), 1e-9);
  tape.backward(loss);
  EXPECT_TRUE(p->grad.empty() || p->grad[0] == 0.0);
}

TEST(Tape, NonRecordingTapeKeepsNoNodes) {
  Tape<float> tape(false);
  auto x = tape.constant(Tensor<float>(Shape{1, 4, 4}, 1.0f));
  auto y = ops::relu(tape, ops::scale(tape, x, 2.0f));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FLOAT_EQ(y->value[0], 2.0f);
}

TEST(Tape, BackwardRequiresScalarRoot) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 2, 2}, 1.0));
  EXPECT_THROW(tape.backward(ops::scale(tape, x, 2.0)), std::invalid_argument);
}
