#include "pdanet/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace pdanet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config: bad value '" + value + "' for key '" + key + "'");
}

long long parse_integer(const std::string& key, const std::string& value) {
  long long out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value);
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value);
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  bad_value(key, value);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(key, value);
    out.push_back(static_cast<int>(parse_integer(key, item)));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

// Shortest text that parses back to the same double.
std::string real_text(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

void PdanetConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  int pools = 0;
  for (int c : backbone_channels) {
    if (c < 0) fail("backbone_channels entries must be >= 0");
    if (c == 0) ++pools;
  }
  if (pools != 3) fail("backbone_channels must contain exactly three pools (0 entries)");
  if (backbone_channels.empty() || backbone_channels.back() == 0) {
    fail("backbone_channels must end with a convolution");
  }
  if (pfe_scales.empty()) fail("pfe_scales must be non-empty");
  for (std::size_t i = 0; i < pfe_scales.size(); ++i) {
    if (pfe_scales[i] < 2) fail("pfe_scales entries must be >= 2");
    if (i && pfe_scales[i] <= pfe_scales[i - 1]) fail("pfe_scales must be strictly increasing");
  }
  if (pfe_reduced_channels < 1 || dad_reduced_channels < 1) fail("reduced channels must be >= 1");
  if (dilation_rate < 1) fail("dilation_rate must be >= 1");
  if (dad_channels.size() != 5) fail("dad_channels must list five widths");
  if (dad_channels.back() != 1) fail("dad_channels must end in 1");
  for (int c : dad_channels) {
    if (c < 1) fail("dad_channels entries must be >= 1");
  }
  if (knn_k < 1) fail("knn_k must be >= 1");
  if (!(beta > 0)) fail("beta must be > 0");
  if (!(sigma_fixed > 0)) fail("sigma_fixed must be > 0");
  if (split_window < 1 || split_window % 2 == 0) fail("split_window must be odd and >= 1");
  if (!(channel_multiplier > 0 && channel_multiplier <= 1)) {
    fail("channel_multiplier must be in (0, 1]");
  }
  for (double l : {lambda_s, lambda_d, lambda_f, lambda_cls}) {
    if (!(l >= 0) || !std::isfinite(l)) fail("loss weights must be finite and >= 0");
  }
  if (!(learning_rate >= 0)) fail("learning_rate must be >= 0");
  if (iterations < 0) fail("iterations must be >= 0");
}

int PdanetConfig::scaled(int channels) const {
  const long v = std::lround(static_cast<double>(channels) * channel_multiplier);
  return static_cast<int>(std::max<long>(1, v));
}

void set_config_value(PdanetConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  using Setter = std::function<void()>;
  const std::map<std::string, Setter> setters = {
      {"backbone_channels", [&] { c.backbone_channels = parse_int_list(key, value); }},
      {"backbone.post_attention", [&] { c.backbone_post_attention = parse_bool(key, value); }},
      {"pfe_scales", [&] { c.pfe_scales = parse_int_list(key, value); }},
      {"pfe_reduced_channels", [&] { c.pfe_reduced_channels = static_cast<int>(parse_integer(key, value)); }},
      {"dilation_rate", [&] { c.dilation_rate = static_cast<int>(parse_integer(key, value)); }},
      {"dad_channels", [&] { c.dad_channels = parse_int_list(key, value); }},
      {"dad_reduced_channels", [&] { c.dad_reduced_channels = static_cast<int>(parse_integer(key, value)); }},
      {"sigma_mode",
       [&] {
         if (value == "knn") {
           c.sigma_mode = SigmaMode::Knn;
         } else if (value == "fixed") {
           c.sigma_mode = SigmaMode::Fixed;
         } else {
           bad_value(key, value);
         }
       }},
      {"knn_k", [&] { c.knn_k = static_cast<int>(parse_integer(key, value)); }},
      {"beta", [&] { c.beta = parse_real(key, value); }},
      {"sigma_fixed", [&] { c.sigma_fixed = parse_real(key, value); }},
      {"class_threshold", [&] { c.class_threshold = parse_real(key, value); }},
      {"region_threshold", [&] { c.region_threshold = parse_real(key, value); }},
      {"split_window", [&] { c.split_window = static_cast<int>(parse_integer(key, value)); }},
      {"loss.lambda_s", [&] { c.lambda_s = parse_real(key, value); }},
      {"loss.lambda_d", [&] { c.lambda_d = parse_real(key, value); }},
      {"loss.lambda_f", [&] { c.lambda_f = parse_real(key, value); }},
      {"loss.lambda_cls", [&] { c.lambda_cls = parse_real(key, value); }},
      {"channel_multiplier", [&] { c.channel_multiplier = parse_real(key, value); }},
      {"seed", [&] { c.seed = static_cast<std::uint64_t>(parse_integer(key, value)); }},
      {"train.lr", [&] { c.learning_rate = parse_real(key, value); }},
      {"train.beta1", [&] { c.adam_beta1 = parse_real(key, value); }},
      {"train.beta2", [&] { c.adam_beta2 = parse_real(key, value); }},
      {"train.epsilon", [&] { c.adam_epsilon = parse_real(key, value); }},
      {"train.lr_schedule",
       [&] {
         if (value == "constant") {
           c.lr_schedule = LrSchedule::Constant;
         } else if (value == "cosine") {
           c.lr_schedule = LrSchedule::Cosine;
         } else {
           bad_value(key, value);
         }
       }},
      {"train.iterations", [&] { c.iterations = static_cast<int>(parse_integer(key, value)); }},
      {"augment.crops", [&] { c.augment_crops = parse_bool(key, value); }},
      {"augment.resize", [&] { c.augment_resize = parse_bool(key, value); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  it->second();
}

PdanetConfig parse_config(const std::string& text, PdanetConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

PdanetConfig load_config(const std::string& path, PdanetConfig base) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_text(const PdanetConfig& c) {
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "backbone_channels = " << join(c.backbone_channels) << "\n"
     << "backbone.post_attention = " << b(c.backbone_post_attention) << "\n"
     << "pfe_scales = " << join(c.pfe_scales) << "\n"
     << "pfe_reduced_channels = " << c.pfe_reduced_channels << "\n"
     << "dilation_rate = " << c.dilation_rate << "\n"
     << "dad_channels = " << join(c.dad_channels) << "\n"
     << "dad_reduced_channels = " << c.dad_reduced_channels << "\n"
     << "sigma_mode = " << (c.sigma_mode == SigmaMode::Knn ? "knn" : "fixed") << "\n"
     << "knn_k = " << c.knn_k << "\n"
     << "beta = " << real_text(c.beta) << "\n"
     << "sigma_fixed = " << real_text(c.sigma_fixed) << "\n"
     << "class_threshold = " << real_text(c.class_threshold) << "\n"
     << "region_threshold = " << real_text(c.region_threshold) << "\n"
     << "split_window = " << c.split_window << "\n"
     << "loss.lambda_s = " << real_text(c.lambda_s) << "\n"
     << "loss.lambda_d = " << real_text(c.lambda_d) << "\n"
     << "loss.lambda_f = " << real_text(c.lambda_f) << "\n"
     << "loss.lambda_cls = " << real_text(c.lambda_cls) << "\n"
     << "channel_multiplier = " << real_text(c.channel_multiplier) << "\n"
     << "seed = " << c.seed << "\n"
     << "train.lr = " << real_text(c.learning_rate) << "\n"
     << "train.beta1 = " << real_text(c.adam_beta1) << "\n"
     << "train.beta2 = " << real_text(c.adam_beta2) << "\n"
     << "train.epsilon = " << real_text(c.adam_epsilon) << "\n"
     << "train.lr_schedule = " << (c.lr_schedule == LrSchedule::Constant ? "constant" : "cosine") << "\n"
     << "train.iterations = " << c.iterations << "\n"
     << "augment.crops = " << b(c.augment_crops) << "\n"
     << "augment.resize = " << b(c.augment_resize) << "\n";
  return os.str();
}

}  // namespace pdanet
