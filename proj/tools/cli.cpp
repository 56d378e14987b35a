#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "pdanet/augmentation.hpp"
#include "pdanet/checkpoint.hpp"
#include "pdanet/density_gt.hpp"
#include "pdanet/evaluation.hpp"
#include "pdanet/synthetic.hpp"
#include "pdanet/training.hpp"

namespace pdanet::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::string out;
  // Flags that shadow config keys; applied only when given on the command line.
  std::map<std::string, std::string> overrides;
  std::vector<std::pair<CLI::Option*, std::string>> override_opts;
};

CLI::Option* add_override(CLI::App* app, Common& c, const std::string& flag, const std::string& key,
                          const std::string& help) {
  auto* opt = app->add_option(flag, c.overrides[key], help);
  c.override_opts.emplace_back(opt, key);
  return opt;
}

void add_common(CLI::App* app, Common& c, bool out_required) {
  app->add_option("--config", c.config, "flat key=value config file")->check(CLI::ExistingFile);
  add_override(app, c, "--seed", "seed", "random seed (overrides the config file)")->check(CLI::NonNegativeNumber);
  auto* out = app->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
}

/// built-in default < config file < explicit flag
PdanetConfig resolve(const Common& c) {
  PdanetConfig cfg = c.config.empty() ? PdanetConfig{} : load_config(c.config);
  for (const auto& [opt, key] : c.override_opts) {
    if (opt->count() > 0) set_config_value(cfg, key, c.overrides.at(key));
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> annotation_inputs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto j = nlohmann::json::parse(in);
  if (j.is_array()) return load_manifest(path);
  return {path};
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  int scenes = 4;
  int people = 30;
  int people_max = -1;
  int height = 128;
  int width = 128;
  int clusters = 3;
  double spread = 16.0;
  double min_separation = 1.0;
};

int cmd_synth(const Common& c, const SynthArgs& a, std::ostream& out) {
  const PdanetConfig cfg = resolve(c);
  if (a.scenes < 1) throw std::invalid_argument("--scenes must be >= 1");
  const int hi = std::max(a.people, a.people_max);
  std::vector<SynthSpec> specs;
  for (int i = 0; i < a.scenes; ++i) {
    SynthSpec s;
    s.seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    s.n_people = a.people + static_cast<int>(hash_draw(cfg.seed, 9, i) % static_cast<std::uint64_t>(hi - a.people + 1));
    s.height = a.height;
    s.width = a.width;
    s.n_clusters = a.clusters;
    s.cluster_spread = a.spread;
    s.min_separation = a.min_separation;
    specs.push_back(s);
  }
  const std::string manifest = generate_dataset(specs, c.out);
  out << "wrote " << specs.size() << " scenes\nmanifest " << manifest << '\n';
  return 0;
}

// ---------------------------------------------------------------- gt

int cmd_gt(const Common& c, const std::string& input, int stride, std::ostream& out) {
  const PdanetConfig cfg = resolve(c);
  if (stride < 1) throw std::invalid_argument("--stride must be >= 1");
  fs::create_directories(c.out);
  for (const auto& path : annotation_inputs(input)) {
    const AnnotatedScene scene = load_annotations(path);
    DensityMap map = ground_truth_density(scene, cfg);
    if (stride > 1) map = downsample_preserving_count(map, stride);
    const std::string dst = (fs::path(c.out) / (scene.id + ".pdm")).string();
    save_density_map(map, dst);
    char line[256];
    std::snprintf(line, sizeof line, "%s points %zu density_sum %.6f -> %s\n", scene.id.c_str(),
                  scene.points.size(), map.sum(), dst.c_str());
    out << line;
  }
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const Common& c, const std::string& manifest, int log_every, std::ostream& out) {
  const PdanetConfig cfg = resolve(c);
  const auto result = train(cfg, manifest, c.out, [&](const TrainLogRow& r) {
    if (log_every > 0 && (r.iter % log_every == 0 || r.iter == 1)) {
      char line[160];
      std::snprintf(line, sizeof line, "iter %6d  loss %.6g  train_mae %.4f\n", r.iter, r.loss, r.train_mae);
      out << line << std::flush;
    }
  });
  char line[512];
  std::snprintf(line, sizeof line,
                "class_threshold %.6g\nregion_threshold %.6g\nfinal_train_mae %.6f\ncheckpoint %s\nlog %s\n",
                result.class_threshold, result.region_threshold, result.final_train_mae,
                result.checkpoint_path.c_str(), result.log_path.c_str());
  out << line;
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& manifest,
             const std::string& label, std::ostream& out) {
  resolve(c);
  const EvalResult r = evaluate(checkpoint, manifest);
  const std::vector<NamedResult> named = {{label, r}};
  const std::string table = report(named);
  out << table;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_eval_csv(r, (fs::path(c.out) / "eval.csv").string());
    std::ofstream((fs::path(c.out) / "report.txt").string()) << table;
    std::ofstream((fs::path(c.out) / "report.json").string()) << report_json(named) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- infer

int cmd_infer(const Common& c, const std::string& checkpoint, const std::string& image_path,
              std::ostream& out) {
  resolve(c);
  auto model = load_checkpoint<float>(checkpoint);
  Image image = load_png(image_path);
  const int h = legal_extent(image.height), w = legal_extent(image.width);
  if (h != image.height || w != image.width) image = resize_bilinear(image, h, w);
  const ModelOutput o = model.predict(image_to_tensor<float>(image));

  const auto& v = o.dm_final.values;
  const float peak = v.empty() ? 0.0f : *std::max_element(v.begin(), v.end());
  std::vector<std::uint8_t> gray(v.size(), 0);
  if (peak > 0.0f) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      gray[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::max(0.0f, v[i]) / peak));
    }
  }
  const std::string dir = c.out.empty() ? "." : c.out;
  fs::create_directories(dir);
  const std::string heatmap = (fs::path(dir) / (fs::path(image_path).stem().string() + "_density.png")).string();
  save_gray_png(gray, o.dm_final.height, o.dm_final.width, heatmap);

  char line[512];
  std::snprintf(line, sizeof line, "count %.4f\nmax_density %.6g\nbranch %s\nprob_dense %.4f\nheatmap %s\n",
                count_from_density(o.dm_final), static_cast<double>(peak), to_string(o.routed_branch), o.prob,
                heatmap.c_str());
  out << line;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"crowd density estimation: synthetic data, ground truth, training, evaluation"};
  app.name("pdanet");
  app.require_subcommand(1);

  Common common;

  auto* synth = app.add_subcommand("synth", "generate a synthetic annotated dataset");
  add_common(synth, common, true);
  SynthArgs sa;
  synth->add_option("--scenes", sa.scenes, "number of scenes")->capture_default_str();
  synth->add_option("--people", sa.people, "heads per scene (lower bound)")->capture_default_str();
  synth->add_option("--people-max", sa.people_max, "upper bound for a per-scene head count");
  synth->add_option("--height", sa.height, "image height")->capture_default_str();
  synth->add_option("--width", sa.width, "image width")->capture_default_str();
  synth->add_option("--clusters", sa.clusters, "crowd clusters per scene")->capture_default_str();
  synth->add_option("--spread", sa.spread, "cluster standard deviation, px")->capture_default_str();
  synth->add_option("--min-separation", sa.min_separation, "minimum head distance, px")->capture_default_str();

  auto* gt = app.add_subcommand("gt", "render ground-truth density maps");
  add_common(gt, common, true);
  std::string gt_input;
  int gt_stride = 1;
  gt->add_option("--input", gt_input, "annotation JSON or manifest")->required()->check(CLI::ExistingFile);
  gt->add_option("--stride", gt_stride, "block-sum factor applied after rendering")->capture_default_str();
  add_override(gt, common, "--sigma-mode", "sigma_mode", "knn | fixed");
  add_override(gt, common, "--sigma", "sigma_fixed", "kernel width for fixed mode and the knn fallback");
  add_override(gt, common, "--knn-k", "knn_k", "neighbours for adaptive widths");
  add_override(gt, common, "--beta", "beta", "adaptive width factor");

  auto* tr = app.add_subcommand("train", "train a model on a manifest");
  add_common(tr, common, true);
  std::string tr_manifest;
  int log_every = 100;
  tr->add_option("--manifest", tr_manifest, "training manifest")->required()->check(CLI::ExistingFile);
  tr->add_option("--log-every", log_every, "progress line interval (0 = quiet)")->capture_default_str();
  add_override(tr, common, "--iterations", "train.iterations", "optimisation steps");
  add_override(tr, common, "--lr", "train.lr", "learning rate");
  add_override(tr, common, "--lr-schedule", "train.lr_schedule", "constant | cosine");
  add_override(tr, common, "--channel-multiplier", "channel_multiplier", "width multiplier for every layer");
  add_override(tr, common, "--sigma-mode", "sigma_mode", "knn | fixed");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  add_common(ev, common, false);
  std::string ev_ckpt, ev_manifest, ev_label = "this run";
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", ev_manifest, "evaluation manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--label", ev_label, "row label in the report")->capture_default_str();

  auto* inf = app.add_subcommand("infer", "count people in one image and write a heatmap");
  add_common(inf, common, false);
  std::string inf_ckpt, inf_image;
  inf->add_option("--checkpoint", inf_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  inf->add_option("--image", inf_image, "PNG image")->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    if (*synth) return cmd_synth(common, sa, out);
    if (*gt) return cmd_gt(common, gt_input, gt_stride, out);
    if (*tr) return cmd_train(common, tr_manifest, log_every, out);
    if (*ev) return cmd_eval(common, ev_ckpt, ev_manifest, ev_label, out);
    if (*inf) return cmd_infer(common, inf_ckpt, inf_image, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace pdanet::cli
