#include "pdanet/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "pdanet/augmentation.hpp"
#include "pdanet/checkpoint.hpp"

namespace pdanet {
namespace {

void check_pair(const std::vector<double>& est, const std::vector<double>& gt, const char* fn) {
  if (est.size() != gt.size()) {
    throw std::invalid_argument(std::string(fn) + ": length mismatch (" + std::to_string(est.size()) +
                                " vs " + std::to_string(gt.size()) + ")");
  }
  if (est.empty()) throw std::invalid_argument(std::string(fn) + ": empty input");
}

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

double count_from_density(const DensityMap& map) { return map.sum(); }

double mae(const std::vector<double>& est, const std::vector<double>& gt) {
  check_pair(est, gt, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) acc += std::abs(est[i] - gt[i]);
  return acc / static_cast<double>(est.size());
}

double mse(const std::vector<double>& est, const std::vector<double>& gt) {
  check_pair(est, gt, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) acc += (est[i] - gt[i]) * (est[i] - gt[i]);
  return std::sqrt(acc / static_cast<double>(est.size()));
}

EvalResult evaluate(PdanetModel<float>& model, const std::vector<AnnotatedScene>& scenes) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: no scenes");
  EvalResult r;
  std::vector<double> est, gt;
  for (const auto& scene : scenes) {
    const AnnotatedScene legal = legalize_size(scene);
    const ModelOutput out = model.predict(image_to_tensor<float>(legal.image));
    EvalRow row;
    row.id = scene.id;
    row.gt_count = static_cast<double>(scene.points.size());
    row.est_count = count_from_density(out.dm_final);
    row.abs_err = std::abs(row.est_count - row.gt_count);
    est.push_back(row.est_count);
    gt.push_back(row.gt_count);
    r.rows.push_back(std::move(row));
  }
  r.mae = mae(est, gt);
  r.mse = mse(est, gt);
  return r;
}

EvalResult evaluate(const std::string& checkpoint, const std::string& manifest) {
  auto model = load_checkpoint<float>(checkpoint);
  const auto entries = load_manifest(manifest);
  if (entries.empty()) throw std::invalid_argument("evaluate: manifest " + manifest + " lists no scenes");
  std::vector<AnnotatedScene> scenes;
  for (const auto& e : entries) scenes.push_back(load_scene(e));
  return evaluate(model, scenes);
}

void write_eval_csv(const EvalResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "id,gt_count,est_count,abs_err\n";
  for (const auto& row : result.rows) {
    out << row.id << ',' << fmt(row.gt_count, "%.9g") << ',' << fmt(row.est_count, "%.9g") << ','
        << fmt(row.abs_err, "%.9g") << '\n';
  }
}

const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"ShanghaiTech-A", "58.5 / 93.4"},
      {"ShanghaiTech-B", "7.1 / 10.9"},
      {"WorldExpo10", "S1 1.8, S2 9.1, S3 9.6, S4 7.3, S5 2.2, avg 6.0 (MAE)"},
      {"UCF CC 50", "119.8 / 159"},
      {"UCSD", "0.93 / 1.21"},
  };
  return rows;
}

std::string report(const std::vector<NamedResult>& results) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %-52s %s\n", "Dataset", "MAE / MSE", "Source");
  out << line << std::string(100, '-') << '\n';
  for (const auto& r : results) {
    const std::string value = fmt(r.result.mae) + " / " + fmt(r.result.mse);
    std::snprintf(line, sizeof line, "%-22s %-52s %s (%zu images)\n", r.label.c_str(), value.c_str(),
                  "this run", r.result.rows.size());
    out << line;
  }
  for (const auto& ref : reference_rows()) {
    std::snprintf(line, sizeof line, "%-22s %-52s %s\n", ref.dataset.c_str(), ref.value.c_str(),
                  "literature, not reproduced");
    out << line;
  }
  return out.str();
}

std::string report_json(const std::vector<NamedResult>& results) {
  nlohmann::json j;
  j["results"] = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.result.rows) {
      rows.push_back({{"id", row.id}, {"gt_count", row.gt_count}, {"est_count", row.est_count},
                      {"abs_err", row.abs_err}});
    }
    j["results"].push_back({{"label", r.label}, {"mae", r.result.mae}, {"mse", r.result.mse}, {"rows", rows}});
  }
  j["reference"] = nlohmann::json::array();
  for (const auto& ref : reference_rows()) {
    j["reference"].push_back({{"dataset", ref.dataset}, {"value", ref.value}, {"reproduced", false}});
  }
  return j.dump(2);
}

}  // namespace pdanet
