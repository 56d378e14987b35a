#include "pdanet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdanet {

double density_loss(const DensityMap& pred, const DensityMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.stride != gt.stride) {
    throw std::invalid_argument("density_loss: shape mismatch (" + std::to_string(pred.height) + "x" +
                                std::to_string(pred.width) + "/" + std::to_string(pred.stride) +
                                " vs " + std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                                "/" + std::to_string(gt.stride) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double d = static_cast<double>(pred.values[i]) - gt.values[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.values.size());
}

double classification_loss(double prob, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("classification_loss: label must be 0 or 1");
  const double p = std::clamp(prob, 1e-7, 1.0 - 1e-7);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

LossBreakdown total_loss(const ModelOutput& out, const DensityTargets& t, const LossWeights& w) {
  LossBreakdown b;
  b.sparse = density_loss(out.dm_sparse, t.sparse);
  b.dense = density_loss(out.dm_dense, t.dense);
  b.final = density_loss(out.dm_final, t.final);
  b.cls = classification_loss(out.prob, t.label);
  b.total = w.sparse * b.sparse + w.dense * b.dense + w.final * b.final + w.cls * b.cls;
  return b;
}

template <typename T>
TapeLoss<T> total_loss(Tape<T>& tape, const ForwardResult<T>& out, const DensityTargets& t,
                       const LossWeights& w) {
  auto check = [&](const Var<T>& pred, const DensityMap& gt, const char* which) {
    if (pred->value.height() != gt.height || pred->value.width() != gt.width) {
      throw std::invalid_argument(std::string("total_loss: ") + which + " target is " +
                                  std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                                  ", prediction is " + to_string(pred->value.shape()));
    }
    return ops::mse(tape, pred, to_tensor<T>(gt));
  };
  auto ls = check(out.dm_sparse, t.sparse, "sparse");
  auto ld = check(out.dm_dense, t.dense, "dense");
  auto lf = check(out.dm_final, t.final, "final");
  auto lc = ops::bce(tape, out.prob, t.label);

  auto total = ops::add(tape,
                        ops::add(tape, ops::scale(tape, ls, static_cast<T>(w.sparse)),
                                 ops::scale(tape, ld, static_cast<T>(w.dense))),
                        ops::add(tape, ops::scale(tape, lf, static_cast<T>(w.final)),
                                 ops::scale(tape, lc, static_cast<T>(w.cls))));
  TapeLoss<T> r;
  r.total = total;
  r.parts.sparse = static_cast<double>(ls->value[0]);
  r.parts.dense = static_cast<double>(ld->value[0]);
  r.parts.final = static_cast<double>(lf->value[0]);
  r.parts.cls = static_cast<double>(lc->value[0]);
  r.parts.total = static_cast<double>(total->value[0]);
  return r;
}

template TapeLoss<float> total_loss<float>(Tape<float>&, const ForwardResult<float>&,
                                           const DensityTargets&, const LossWeights&);
template TapeLoss<double> total_loss<double>(Tape<double>&, const ForwardResult<double>&,
                                             const DensityTargets&, const LossWeights&);

}  // namespace pdanet
