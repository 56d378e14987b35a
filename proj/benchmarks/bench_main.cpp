#include <benchmark/benchmark.h>

#include "pdanet/density_gt.hpp"
#include "pdanet/losses.hpp"
#include "pdanet/model.hpp"
#include "pdanet/synthetic.hpp"

using namespace pdanet;

namespace {

Tensor<float> noise(Shape s, std::uint64_t seed) {
  Tensor<float> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(2.0 * uniform_draw(seed, 0, i) - 1.0);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  InitRng rng(1);
  Conv2d<float> conv("bench", c, c, 3);
  conv.init(rng);
  const auto x = noise(Shape{c, hw, hw}, 2);
  for (auto _ : state) {
    Tape<float> tape(false);
    auto y = ops::conv2d(tape, tape.constant(x), conv);
    benchmark::DoNotOptimize(y->value.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv3x3)->Args({16, 64})->Args({64, 64})->Args({128, 32})->Unit(benchmark::kMillisecond);

void BM_RenderDensity(benchmark::State& state) {
  SynthSpec s;
  s.seed = 11;
  s.n_people = static_cast<int>(state.range(0));
  s.height = 384;
  s.width = 512;
  s.n_clusters = 4;
  s.cluster_spread = 80;
  s.min_separation = 0.5;
  const auto scene = generate_scene(s);
  for (auto _ : state) {
    const auto map = render_density(scene.points, knn_sigma(scene.points), s.height, s.width);
    benchmark::DoNotOptimize(map.values.data());
  }
}
BENCHMARK(BM_RenderDensity)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);

PdanetConfig tiny() {
  PdanetConfig c;
  c.channel_multiplier = 0.25;
  c.seed = 1;
  return c;
}

void BM_ModelForward(benchmark::State& state) {
  PdanetModel<float> model(tiny());
  const auto img = noise(Shape{3, 128, 128}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(img).prob);
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

void BM_ModelForwardBackward(benchmark::State& state) {
  PdanetModel<float> model(tiny());
  const auto img = noise(Shape{3, 128, 128}, 3);
  DensityTargets t;
  t.sparse = t.dense = t.final = DensityMap(16, 16, 8);
  for (auto _ : state) {
    model.zero_grad();
    Tape<float> tape;
    auto out = model.forward(tape, tape.constant(img), 0);
    tape.backward(total_loss(tape, out, t, LossWeights{}).total);
  }
}
BENCHMARK(BM_ModelForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
