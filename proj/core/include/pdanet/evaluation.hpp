#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pdanet/data_io.hpp"
#include "pdanet/model.hpp"

namespace pdanet {

/// Sum over all cells.
double count_from_density(const DensityMap& map);

/// Mean absolute count error. Throws on empty or unequal inputs.
double mae(const std::vector<double>& est, const std::vector<double>& gt);
/// Root of the mean squared count error (reported under the name MSE).
double mse(const std::vector<double>& est, const std::vector<double>& gt);

struct EvalRow {
  std::string id;
  double gt_count = 0.0;
  double est_count = 0.0;
  double abs_err = 0.0;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  double mae = 0.0;
  double mse = 0.0;
};

/// Resizes each scene to legal dimensions, predicts with classifier routing,
/// and compares sum(dm_final) with the number of annotated heads.
EvalResult evaluate(PdanetModel<float>& model, const std::vector<AnnotatedScene>& scenes);
EvalResult evaluate(const std::string& checkpoint, const std::string& manifest);

/// `id,gt_count,est_count,abs_err`
void write_eval_csv(const EvalResult& result, const std::string& path);

/// Published figures shown beside our own runs; never recomputed.
struct ReferenceRow {
  std::string dataset;
  std::string value;  // "MAE / MSE", or per-scene MAE list
};

const std::vector<ReferenceRow>& reference_rows();

struct NamedResult {
  std::string label;
  EvalResult result;
};

/// Fixed-width table: our runs first, then the reference rows marked as
/// literature values that were not reproduced.
std::string report(const std::vector<NamedResult>& results);
std::string report_json(const std::vector<NamedResult>& results);

}  // namespace pdanet
