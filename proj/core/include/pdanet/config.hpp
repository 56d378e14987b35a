#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pdanet {

enum class SigmaMode { Knn, Fixed };
enum class LrSchedule { Constant, Cosine };

/// Every architecture, ground-truth and training knob, with its default.
/// Serialised as flat `key = value` text (see to_text / parse_config).
struct PdanetConfig {
  // 0 marks a 2x2 max pool; exactly three pools give the stride-8 front end.
  std::vector<int> backbone_channels = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512};
  bool backbone_post_attention = true;

  std::vector<int> pfe_scales = {2, 4, 8};
  int pfe_reduced_channels = 32;
  int dilation_rate = 2;

  std::vector<int> dad_channels = {512, 256, 128, 128, 1};
  int dad_reduced_channels = 32;

  // Ground truth.
  SigmaMode sigma_mode = SigmaMode::Knn;
  int knn_k = 3;
  double beta = 0.3;
  double sigma_fixed = 15.0;
  double class_threshold = 0.0;    // <= 0: median training count
  double region_threshold = -1.0;  // < 0: 4 x mean positive training density
  int split_window = 15;

  // Composite loss.
  double lambda_s = 1.0;
  double lambda_d = 1.0;
  double lambda_f = 1.0;
  double lambda_cls = 1.0;

  double channel_multiplier = 1.0;
  std::uint64_t seed = 0;

  // Optimiser and loop.
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LrSchedule lr_schedule = LrSchedule::Constant;  // cosine: half-period decay towards 0 over the run
  int iterations = 2000;
  bool augment_crops = false;
  bool augment_resize = false;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  /// Width after channel_multiplier; never below 1.
  int scaled(int channels) const;

  friend bool operator==(const PdanetConfig&, const PdanetConfig&) = default;
};

/// Applies one `key = value` pair. Unknown keys and malformed values throw.
void set_config_value(PdanetConfig& config, const std::string& key, const std::string& value);

/// Parses flat key=value text ('#' starts a comment) on top of `base`.
PdanetConfig parse_config(const std::string& text, PdanetConfig base = {});
PdanetConfig load_config(const std::string& path, PdanetConfig base = {});

/// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const PdanetConfig& config);

}  // namespace pdanet
