#include "pdanet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "pdanet/augmentation.hpp"
#include "pdanet/checkpoint.hpp"
#include "pdanet/density_gt.hpp"
#include "pdanet/synthetic.hpp"

namespace pdanet {
namespace {

constexpr std::uint64_t kCropStream = 0x5A11;
constexpr std::uint64_t kOrderStream = 0x0DE2;

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = hash_draw(seed, kOrderStream + epoch, i);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
  });
  return order;
}

std::vector<Tensor<float>> snapshot(PdanetModel<float>& model) {
  std::vector<Tensor<float>> values;
  for (auto* p : model.parameters()) values.push_back(p->value);
  return values;
}

void restore(PdanetModel<float>& model, const std::vector<Tensor<float>>& values) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

DensityMap ground_truth_density(const AnnotatedScene& scene, const PdanetConfig& config) {
  if (config.sigma_mode == SigmaMode::Fixed) {
    return fixed_sigma_density(scene.points, scene.height, scene.width, config.sigma_fixed);
  }
  const auto sigmas = knn_sigma(scene.points, config.knn_k, config.beta, config.sigma_fixed);
  return render_density(scene.points, sigmas, scene.height, scene.width);
}

DensityTargets make_targets(const DensityMap& full, double region_threshold, double class_threshold,
                            int window, int stride) {
  const DensitySplit split = split_sparse_dense(full, region_threshold, window);
  DensityTargets t;
  t.sparse = downsample_preserving_count(split.sparse, stride);
  t.dense = downsample_preserving_count(split.dense, stride);
  t.final = downsample_preserving_count(full, stride);
  t.label = class_label(full, class_threshold);
  return t;
}

PreparedData prepare_training_data(const std::vector<AnnotatedScene>& scenes,
                                   const PdanetConfig& config) {
  if (scenes.empty()) throw std::invalid_argument("prepare_training_data: no scenes");
  std::vector<AnnotatedScene> pool;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const AnnotatedScene& s = scenes[i];
    if (s.image.pixels.empty()) throw std::invalid_argument("prepare_training_data: scene " + s.id + " has no image");
    if (!config.augment_crops && !config.augment_resize) pool.push_back(s);
    if (config.augment_crops) {
      for (auto& c : five_crops(s, hash_draw(config.seed, kCropStream, i))) pool.push_back(std::move(c));
    }
    if (config.augment_resize) pool.push_back(aspect_resize(s));
  }

  std::vector<AnnotatedScene> legal;
  std::vector<DensityMap> maps;
  std::vector<double> counts;
  for (const auto& s : pool) {
    legal.push_back(legalize_size(s));
    maps.push_back(ground_truth_density(legal.back(), config));
    counts.push_back(static_cast<double>(legal.back().points.size()));
  }

  PreparedData data;
  data.class_threshold = config.class_threshold > 0.0 ? config.class_threshold : median_count(counts);
  data.region_threshold = config.region_threshold >= 0.0 ? config.region_threshold
                                                         : 4.0 * mean_positive_density(maps);
  for (std::size_t i = 0; i < legal.size(); ++i) {
    TrainingSample sample;
    sample.id = legal[i].id;
    sample.image = image_to_tensor<float>(legal[i].image);
    sample.targets = make_targets(maps[i], data.region_threshold, data.class_threshold, config.split_window);
    sample.count = counts[i];
    data.samples.push_back(std::move(sample));
  }
  return data;
}

template <typename T>
void Adam<T>::step(const std::vector<Parameter<T>*>& params) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k]->value;
    const auto& grad = params[k]->grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * g;
      const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      value[i] -= static_cast<T>(lr_ * (mi / c1) / (std::sqrt(vi / c2) + epsilon_));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

double scheduled_learning_rate(const PdanetConfig& config, int iter) {
  if (config.lr_schedule == LrSchedule::Constant) return config.learning_rate;
  const double progress = static_cast<double>(iter - 1) / std::max(1, config.iterations);
  return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<TrainLogRow> train_model(PdanetModel<float>& model, const PreparedData& data,
                                     const std::string& checkpoint_path,
                                     const std::function<void(const TrainLogRow&)>& on_row) {
  if (data.samples.empty()) throw std::invalid_argument("train_model: no training samples");
  const PdanetConfig& cfg = model.config();
  const LossWeights weights = LossWeights::from(cfg);
  Adam<float> adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  const auto params = model.parameters();

  std::vector<TrainLogRow> log;
  std::vector<std::size_t> order;
  std::vector<Tensor<float>> last_good = snapshot(model);
  double epoch_err = 0.0;
  int epoch_seen = 0;
  const std::size_t n = data.samples.size();

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    const std::size_t pos = static_cast<std::size_t>(iter - 1) % n;
    if (pos == 0) {
      order = epoch_order(n, cfg.seed, static_cast<std::uint64_t>(iter - 1) / n);
      last_good = snapshot(model);
      epoch_err = 0.0;
      epoch_seen = 0;
    }
    const TrainingSample& sample = data.samples[order[pos]];

    model.zero_grad();
    Tape<float> tape;
    auto result = model.forward(tape, tape.constant(sample.image), sample.targets.label);
    auto loss = total_loss(tape, result, sample.targets, weights);
    if (!std::isfinite(loss.parts.total)) {
      restore(model, last_good);
      save_checkpoint(model, checkpoint_path);
      throw TrainingDiverged("training diverged at iteration " + std::to_string(iter) +
                                 "; last good parameters saved to " + checkpoint_path,
                             checkpoint_path);
    }
    tape.backward(loss.total);
    adam.set_learning_rate(scheduled_learning_rate(cfg, iter));
    adam.step(params);

    epoch_err += std::abs(result.dm_final->value.sum() - sample.count);
    ++epoch_seen;
    TrainLogRow row;
    row.iter = iter;
    row.loss = loss.parts.total;
    row.loss_s = loss.parts.sparse;
    row.loss_d = loss.parts.dense;
    row.loss_f = loss.parts.final;
    row.loss_cls = loss.parts.cls;
    row.train_mae = epoch_err / epoch_seen;
    log.push_back(row);
    if (on_row) on_row(row);
  }
  return log;
}

double train_mae(PdanetModel<float>& model, const std::vector<TrainingSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("train_mae: no samples");
  double err = 0.0;
  for (const auto& s : samples) err += std::abs(model.predict(s.image).dm_final.sum() - s.count);
  return err / static_cast<double>(samples.size());
}

void write_train_log(const std::vector<TrainLogRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write training log " + path);
  out << "iter,loss,loss_s,loss_d,loss_f,loss_cls,train_mae\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.iter, r.loss, r.loss_s,
                  r.loss_d, r.loss_f, r.loss_cls, r.train_mae);
    out << line;
  }
}

TrainResult train(const PdanetConfig& config, const std::string& manifest,
                  const std::string& out_dir,
                  const std::function<void(const TrainLogRow&)>& on_row) {
  config.validate();
  const auto entries = load_manifest(manifest);
  if (entries.empty()) throw std::invalid_argument("train: manifest " + manifest + " lists no scenes");
  std::vector<AnnotatedScene> scenes;
  for (const auto& e : entries) scenes.push_back(load_scene(e));

  PreparedData data = prepare_training_data(scenes, config);
  PdanetConfig resolved = config;
  resolved.class_threshold = data.class_threshold;
  resolved.region_threshold = data.region_threshold;

  std::filesystem::create_directories(out_dir);
  TrainResult result;
  result.checkpoint_path = (std::filesystem::path(out_dir) / "model.ckpt").string();
  result.log_path = (std::filesystem::path(out_dir) / "train_log.csv").string();
  result.class_threshold = data.class_threshold;
  result.region_threshold = data.region_threshold;

  PdanetModel<float> model(resolved);
  result.log = train_model(model, data, result.checkpoint_path, on_row);
  save_checkpoint(model, result.checkpoint_path);
  write_train_log(result.log, result.log_path);
  result.final_train_mae = train_mae(model, data.samples);
  return result;
}

}  // namespace pdanet
