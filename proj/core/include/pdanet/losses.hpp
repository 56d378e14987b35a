#pragma once

#include "pdanet/autograd.hpp"
#include "pdanet/config.hpp"
#include "pdanet/model.hpp"

namespace pdanet {

/// Mean squared per-cell error. Maps must agree in shape and stride.
double density_loss(const DensityMap& pred, const DensityMap& gt);

/// Clipped binary cross-entropy, probability clipped to [1e-7, 1 - 1e-7].
double classification_loss(double prob, int label);

struct LossWeights {
  double sparse = 1.0;
  double dense = 1.0;
  double final = 1.0;
  double cls = 1.0;

  static LossWeights from(const PdanetConfig& c) {
    return {c.lambda_s, c.lambda_d, c.lambda_f, c.lambda_cls};
  }
};

/// Training targets at the model's output stride.
struct DensityTargets {
  DensityMap sparse;
  DensityMap dense;
  DensityMap final;
  int label = 0;
};

struct LossBreakdown {
  double total = 0.0;
  double sparse = 0.0;
  double dense = 0.0;
  double final = 0.0;
  double cls = 0.0;
};

LossBreakdown total_loss(const ModelOutput& out, const DensityTargets& targets,
                         const LossWeights& weights);

/// Differentiable form of total_loss over a recorded forward pass.
template <typename T>
struct TapeLoss {
  Var<T> total;
  LossBreakdown parts;
};

template <typename T>
TapeLoss<T> total_loss(Tape<T>& tape, const ForwardResult<T>& out, const DensityTargets& targets,
                       const LossWeights& weights);

}  // namespace pdanet
