#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdanet/config.hpp"
#include "pdanet/data_io.hpp"
#include "pdanet/losses.hpp"
#include "pdanet/model.hpp"

namespace pdanet {

/// Stride-1 ground truth for a scene using the configured sigma rule.
DensityMap ground_truth_density(const AnnotatedScene& scene, const PdanetConfig& config);

/// Split at stride 1, then block-sum every part to the model stride.
DensityTargets make_targets(const DensityMap& full, double region_threshold, double class_threshold,
                            int window, int stride = 8);

struct TrainingSample {
  std::string id;
  Tensor<float> image;
  DensityTargets targets;
  double count = 0.0;  // number of annotated heads
};

struct PreparedData {
  std::vector<TrainingSample> samples;
  double class_threshold = 0.0;
  double region_threshold = 0.0;
};

/// Expands scenes into training samples (each scene as is, or only its enabled
/// variants: five crops, aspect resize), legalises sizes, renders ground truth and
/// resolves the data-relative thresholds when the config leaves them unset.
PreparedData prepare_training_data(const std::vector<AnnotatedScene>& scenes,
                                   const PdanetConfig& config);

/// Adaptive-moment optimiser with bias correction.
template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double epsilon)
      : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(const std::vector<Parameter<T>*>& params);
  long steps() const { return t_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

/// Step size for 1-based iteration `iter` of config.iterations.
double scheduled_learning_rate(const PdanetConfig& config, int iter);

struct TrainLogRow {
  int iter = 0;
  double loss = 0.0;
  double loss_s = 0.0;
  double loss_d = 0.0;
  double loss_f = 0.0;
  double loss_cls = 0.0;
  double train_mae = 0.0;  // running mean |count error| over the current epoch
};

/// Thrown when the loss becomes non-finite; the last good parameters have
/// been written to `checkpoint_path`.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::string checkpoint)
      : std::runtime_error(what), checkpoint_path(std::move(checkpoint)) {}
  std::string checkpoint_path;
};

/// Runs config.iterations single-sample steps with teacher routing. Epoch
/// order is a seeded permutation. `on_row` (optional) sees every log row.
std::vector<TrainLogRow> train_model(PdanetModel<float>& model, const PreparedData& data,
                                     const std::string& checkpoint_path,
                                     const std::function<void(const TrainLogRow&)>& on_row = {});

struct TrainResult {
  std::string checkpoint_path;
  std::string log_path;
  std::vector<TrainLogRow> log;
  double final_train_mae = 0.0;  // predicted routing, over the prepared samples
  double class_threshold = 0.0;
  double region_threshold = 0.0;
};

/// End to end: manifest -> samples -> training -> `model.ckpt` and
/// `train_log.csv` in out_dir.
TrainResult train(const PdanetConfig& config, const std::string& manifest,
                  const std::string& out_dir,
                  const std::function<void(const TrainLogRow&)>& on_row = {});

void write_train_log(const std::vector<TrainLogRow>& rows, const std::string& path);

/// Mean |sum(dm_final) - count| over samples, routed by the classifier.
double train_mae(PdanetModel<float>& model, const std::vector<TrainingSample>& samples);

}  // namespace pdanet
