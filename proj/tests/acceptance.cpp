// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pdanet/augmentation.hpp"
#include "pdanet/checkpoint.hpp"
#include "pdanet/density_gt.hpp"
#include "pdanet/evaluation.hpp"
#include "pdanet/grad_check.hpp"
#include "pdanet/synthetic.hpp"
#include "pdanet/training.hpp"
#include "support/oracles.hpp"

using namespace pdanet;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

SynthSpec crowd_spec(std::uint64_t seed, int people, int h, int w) {
  SynthSpec s;
  s.seed = seed;
  s.n_people = people;
  s.height = h;
  s.width = w;
  s.n_clusters = 4;
  s.cluster_spread = 0.2 * std::min(h, w);
  s.min_separation = 0.5;
  return s;
}

DensityMap random_map(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<float> u(0.0f, 2.0f);
  DensityMap m(h, w);
  for (auto& v : m.values) v = u(rng);
  return m;
}

Verdict count_conservation() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int max_people = 0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const int people = static_cast<int>(hash_draw(2024, 1, i) % 501);
    max_people = std::max(max_people, people);
    const auto scene = generate_scene(crowd_spec(10'000 + i, people, 192, 256));
    const auto map = render_density(scene.points, knn_sigma(scene.points), scene.height, scene.width);
    const double n = static_cast<double>(scene.points.size());
    worst = std::max(worst, std::abs(count_from_density(map) - n) / std::max(1.0, n));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-4 && secs < 60.0, "200 scenes up to " + std::to_string(max_people) + " heads, worst relative error " +
                                          fmt("%.2e", worst) + ", " + fmt("%.1f", secs) + " s"};
}

Verdict downsample_conservation() {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int h = 8 * (1 + static_cast<int>(rng() % 40)), w = 8 * (1 + static_cast<int>(rng() % 40));
    const auto m = random_map(rng, h, w);
    const auto d = downsample_preserving_count(m, 8);
    worst = std::max(worst, std::abs(d.sum() - m.sum()) / m.sum());
  }
  return {worst <= 1e-5, "100 maps, worst relative drift " + fmt("%.2e", worst)};
}

Verdict partition_laws() {
  std::size_t bad_crops = 0;
  float worst_split = 0.0f;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const int h = 64 + static_cast<int>(hash_draw(3, 1, i) % 97), w = 64 + static_cast<int>(hash_draw(3, 2, i) % 97);
    const auto scene = generate_scene(crowd_spec(20'000 + i, static_cast<int>(hash_draw(3, 3, i) % 200), h, w));
    const auto crops = five_crops(scene, i);
    std::size_t n = 0;
    for (int c = 0; c < 4; ++c) n += crops[c].points.size();
    bad_crops += n != scene.points.size();

    const auto map = render_density(scene.points, knn_sigma(scene.points), h, w);
    const double tau = 4.0 * mean_positive_density({map});
    const auto split = split_sparse_dense(map, tau);
    for (std::size_t k = 0; k < map.values.size(); ++k) {
      worst_split = std::max(worst_split, std::abs(split.sparse.values[k] + split.dense.values[k] - map.values[k]));
    }
  }
  return {bad_crops == 0 && worst_split == 0.0f, "50 scenes: " + std::to_string(bad_crops) +
                                                    " crop partitions broken, split max-abs error " +
                                                    fmt("%g", worst_split)};
}

Verdict shape_law() {
  const auto t0 = std::chrono::steady_clock::now();
  PdanetModel<float> model(PdanetConfig{});
  std::string detail;
  bool ok = true;
  for (auto [h, w] : {std::pair{768, 1024}, std::pair{1024, 768}, std::pair{384, 512}}) {
    Tensor<float> img(Shape{3, h, w});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(2.0 * uniform_draw(5, h, i) - 1.0);
    const auto out = model.predict(img);
    for (const auto* m : {&out.dm_sparse, &out.dm_dense, &out.dm_final}) {
      ok &= m->height == h / 8 && m->width == w / 8;
      for (float v : m->values) ok &= v >= 0.0f && std::isfinite(v);
    }
    detail += std::to_string(h) + "x" + std::to_string(w) + "->" + std::to_string(out.dm_final.height) + "x" +
              std::to_string(out.dm_final.width) + " ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok, "full width, " + detail + "all maps >= 0, " + fmt("%.0f", secs) + " s"};
}

Verdict gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  PdanetConfig c;
  c.channel_multiplier = 1.0 / 32.0;
  c.seed = 1;
  const auto r = grad_check(c, 1e-4);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {r.max_relative_error < 1e-3 && secs < 600.0,
          "max relative error " + fmt("%.2e", r.max_relative_error) + " (" + r.worst_parameter + "), " +
              std::to_string(r.probes) + " probes, " + std::to_string(r.kink_probes) +
              " crossed a kink (unfrozen error " + fmt("%.2e", r.plain_max_relative_error) + "), " +
              fmt("%.0f", secs) + " s"};
}

Verdict overfit_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<AnnotatedScene> scenes;
  for (std::uint64_t i = 0; i < 4; ++i) {
    SynthSpec s;
    s.seed = 1'000'003 + i;
    s.n_people = 5 + static_cast<int>(hash_draw(1, 9, i) % 21);
    s.height = s.width = 64;
    s.n_clusters = 2;
    s.cluster_spread = 10;
    scenes.push_back(generate_scene(s));
  }
  PdanetConfig c;
  c.channel_multiplier = 0.25;
  c.lr_schedule = LrSchedule::Cosine;
  c.iterations = 2000;
  c.seed = 1;
  const auto data = prepare_training_data(scenes, c);
  oracle::TempDir dir("acceptance");

  std::vector<std::vector<TrainLogRow>> logs;
  double final_mae = 0.0;
  for (int run = 0; run < 2; ++run) {
    PdanetConfig resolved = c;
    resolved.class_threshold = data.class_threshold;
    resolved.region_threshold = data.region_threshold;
    PdanetModel<float> model(resolved);
    logs.push_back(train_model(model, data, dir.file("m.ckpt")));
    if (run == 0) final_mae = train_mae(model, data.samples);
  }
  bool identical = logs[0].size() == logs[1].size();
  for (std::size_t i = 0; identical && i < logs[0].size(); ++i) {
    identical = std::memcmp(&logs[0][i].loss, &logs[1][i].loss, sizeof(double)) == 0;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {final_mae < 1.0 && identical && secs < 1800.0,
          "train MAE " + fmt("%.3f", final_mae) + " after " + std::to_string(c.iterations) + " iterations, loss curves " +
              (identical ? "bit-identical" : "DIFFER") + " across two runs, " + fmt("%.0f", secs) + " s"};
}

Verdict routing() {
  PdanetConfig c;
  c.channel_multiplier = 1.0 / 32.0;
  PdanetModel<double> m(c);
  Tensor<double> img(Shape{3, 64, 64});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = 2.0 * uniform_draw(8, 0, i) - 1.0;
  DensityTargets t;
  t.sparse = t.dense = t.final = DensityMap(8, 8, 8);
  for (auto* d : {&t.sparse, &t.dense, &t.final}) {
    for (std::size_t i = 0; i < d->values.size(); ++i) d->values[i] = static_cast<float>(uniform_draw(8, 1, i));
  }
  t.label = 0;
  Tape<double> tape;
  auto r = m.forward(tape, tape.constant(img), 0);
  tape.backward(total_loss(tape, r, t, LossWeights{}).total);
  const auto idle = m.dense_branch_parameter_names(Branch::DenseDad);
  const std::set<std::string> idle_set(idle.begin(), idle.end());
  double leak = 0.0;
  for (auto* p : m.parameters()) {
    if (idle_set.count(p->name)) leak = std::max(leak, p->grad.max_abs());
  }

  m.classifier().weight.value.fill(0.0);
  m.classifier().bias.value.fill(0.0);
  const auto boundary = m.predict(img);
  m.classifier().bias.value.fill(0.2);
  const auto above = m.predict(img);
  m.classifier().bias.value.fill(-0.2);
  const auto below = m.predict(img);
  const bool routes = boundary.prob == 0.5 && boundary.routed_branch == Branch::DenseDad &&
                      above.routed_branch == Branch::DenseDad && below.routed_branch == Branch::SparseDad;
  return {leak == 0.0 && routes && r.routed == Branch::SparseDad,
          "teacher 0: max |grad| over " + std::to_string(idle.size()) + " dense-branch tensors = " + fmt("%g", leak) +
              "; prob 0.5 -> " + to_string(boundary.routed_branch) + ", " + fmt("%.3f", above.prob) + " -> " +
              to_string(above.routed_branch) + ", " + fmt("%.3f", below.prob) + " -> " + to_string(below.routed_branch)};
}

Verdict metric_oracle() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 2000);
  double worst = 0.0;
  bool ordered = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 100;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = u(rng), b[i] = u(rng);
    long double sa = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const long double d = static_cast<long double>(a[i]) - b[i];
      sa += d < 0 ? -d : d;
      sq += d * d;
    }
    const double ref_mae = static_cast<double>(sa / n), ref_rms = static_cast<double>(std::sqrt(sq / n));
    const double m = mae(a, b), r = mse(a, b);
    worst = std::max({worst, std::abs(m - ref_mae) / std::max(ref_mae, 1e-300), std::abs(r - ref_rms) / std::max(ref_rms, 1e-300)});
    ordered &= m <= r * (1 + 1e-12);
  }
  const double wm = mae({10, 20}, {12, 18}), wr = mse({10, 20}, {12, 18});
  return {worst <= 1e-9 && ordered && wm == 2.0 && wr == 2.0,
          "1000 vectors, worst relative deviation " + fmt("%.1e", worst) + ", MAE <= MSE " +
              (ordered ? "always" : "VIOLATED") + ", worked case " + fmt("%g", wm) + "/" + fmt("%g", wr)};
}

Verdict report_fidelity() {
  const std::vector<std::pair<std::string, std::string>> expected = {
      {"ShanghaiTech-A", "58.5 / 93.4"},
      {"ShanghaiTech-B", "7.1 / 10.9"},
      {"WorldExpo10", "S1 1.8, S2 9.1, S3 9.6, S4 7.3, S5 2.2, avg 6.0 (MAE)"},
      {"UCF CC 50", "119.8 / 159"},
      {"UCSD", "0.93 / 1.21"}};
  const auto& rows = reference_rows();
  bool ok = true;
  for (const auto& [dataset, value] : expected) {
    bool found = false;
    for (const auto& r : rows) found |= r.dataset == dataset && r.value == value;
    ok &= found;
  }
  const std::string table = report({});
  std::size_t labelled = 0;
  for (auto p = table.find("literature, not reproduced"); p != std::string::npos;
       p = table.find("literature, not reproduced", p + 1)) {
    ++labelled;
  }
  ok &= rows.size() == expected.size() && labelled == rows.size();
  return {ok, std::to_string(rows.size()) + " reference rows, " + std::to_string(labelled) +
                  " labelled as literature values"};
}

Verdict format_round_trips() {
  oracle::TempDir dir("acceptance_io");
  std::mt19937_64 rng(10);
  bool maps_ok = true;
  for (int i = 0; i < 20; ++i) {
    DensityMap m = random_map(rng, 1 + static_cast<int>(rng() % 50), 1 + static_cast<int>(rng() % 50));
    m.stride = 1 + static_cast<int>(rng() % 8);
    save_density_map(m, dir.file("m.pdm"));
    const auto r = load_density_map(dir.file("m.pdm"));
    maps_ok &= r.height == m.height && r.width == m.width && r.stride == m.stride &&
               std::memcmp(r.values.data(), m.values.data(), m.values.size() * sizeof(float)) == 0;
  }

  PdanetConfig c;
  c.channel_multiplier = 1.0 / 16.0;
  c.seed = 12;
  PdanetModel<float> model(c);
  for (auto* p : model.parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += static_cast<float>(uniform_draw(12, 1, i)) * 1e-3f;
  }
  save_checkpoint(model, dir.file("m.ckpt"));
  auto loaded = load_checkpoint<float>(dir.file("m.ckpt"));
  Tensor<float> img(Shape{3, 64, 96});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(uniform_draw(12, 2, i));
  const auto a = model.predict(img), b = loaded.predict(img);
  const bool ckpt_ok = a.prob == b.prob && a.dm_final == b.dm_final && a.dm_sparse == b.dm_sparse &&
                       a.dm_dense == b.dm_dense && a.routed_branch == b.routed_branch;
  return {maps_ok && ckpt_ok, std::string("density files ") + (maps_ok ? "bit-identical" : "DIFFER") +
                                  " over 20 maps, checkpoint reload output " + (ckpt_ok ? "bit-identical" : "DIFFERS")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"count conservation", count_conservation},
      {"block-downsample conservation", downsample_conservation},
      {"partition laws", partition_laws},
      {"shape law", shape_law},
      {"gradient fidelity", gradient_fidelity},
      {"overfit smoke", overfit_smoke},
      {"routing correctness", routing},
      {"metric oracle", metric_oracle},
      {"report fidelity", report_fidelity},
      {"format round-trips", format_round_trips},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s  %2zu  %-30s %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
