#include "pdanet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pdanet/synthetic.hpp"

namespace pdanet {
namespace {

struct Pass {
  double loss;
  std::vector<std::uint32_t> decisions;
};

class LossProbe {
 public:
  LossProbe(PdanetModel<double>& model, const Tensor<double>& image, const DensityTargets& targets)
      : model_(model), image_(image), targets_(targets), weights_(LossWeights::from(model.config())) {}

  /// Unconstrained pass; also returns the choices it made.
  Pass free() const {
    Tape<double> tape(false);
    tape.record_decisions();
    const double loss = run(tape);
    return {loss, tape.decisions()};
  }

  /// Pass forced onto the piece described by `decisions`.
  double frozen(const std::vector<std::uint32_t>& decisions) const {
    Tape<double> tape(false);
    tape.replay_decisions(decisions);
    return run(tape);
  }

  /// Analytic gradient into every parameter's grad buffer.
  void analytic() const {
    model_.zero_grad();
    Tape<double> tape;
    auto r = model_.forward(tape, tape.constant(image_), targets_.label);
    tape.backward(total_loss(tape, r, targets_, weights_).total);
  }

 private:
  double run(Tape<double>& tape) const {
    auto r = model_.forward(tape, tape.constant(image_), targets_.label);
    return total_loss(tape, r, targets_, weights_).parts.total;
  }

  PdanetModel<double>& model_;
  const Tensor<double>& image_;
  const DensityTargets& targets_;
  LossWeights weights_;
};

DensityMap random_map(int h, int w, std::uint64_t seed, std::uint64_t stream) {
  DensityMap m(h, w, 8);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = static_cast<float>(uniform_draw(seed, stream, i));
  }
  return m;
}

void keep_worst(GradCheckResult& into, const GradCheckResult& r) {
  if (into.per_parameter.empty()) {
    into.per_parameter = r.per_parameter;
  } else {
    for (std::size_t k = 0; k < r.per_parameter.size(); ++k) {
      auto& a = into.per_parameter[k];
      a.relative_error = std::max(a.relative_error, r.per_parameter[k].relative_error);
      a.plain_relative_error = std::max(a.plain_relative_error, r.per_parameter[k].plain_relative_error);
    }
  }
  if (r.max_relative_error >= into.max_relative_error) {
    into.max_relative_error = r.max_relative_error;
    into.worst_parameter = r.worst_parameter;
  }
  into.plain_max_relative_error = std::max(into.plain_max_relative_error, r.plain_max_relative_error);
  into.probes += r.probes;
  into.kink_probes += r.kink_probes;
}

}  // namespace

double relative_gradient_error(const Tensor<double>& analytic, const Tensor<double>& numeric,
                               double floor) {
  if (analytic.shape() != numeric.shape()) throw std::invalid_argument("relative_gradient_error: shape mismatch");
  double diff = 0.0;
  double scale = floor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

GradCheckResult grad_check_model(PdanetModel<double>& model, const Tensor<double>& image,
                                 const DensityTargets& targets, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  LossProbe probe(model, image, targets);
  probe.analytic();
  const Pass base = probe.free();

  GradCheckResult result;
  for (auto* p : model.parameters()) {
    Tensor<double> frozen(p->value.shape());
    Tensor<double> plain(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double original = p->value[i];
      p->value[i] = original + eps;
      const double up = probe.frozen(base.decisions);
      const Pass up_free = probe.free();
      p->value[i] = original - eps;
      const double down = probe.frozen(base.decisions);
      const Pass down_free = probe.free();
      p->value[i] = original;
      frozen[i] = (up - down) / (2.0 * eps);
      plain[i] = (up_free.loss - down_free.loss) / (2.0 * eps);
      ++result.probes;
      if (up_free.decisions != base.decisions || down_free.decisions != base.decisions) ++result.kink_probes;
    }
    ParameterGradError e{p->name, relative_gradient_error(p->grad, frozen),
                         relative_gradient_error(p->grad, plain)};
    if (e.relative_error >= result.max_relative_error) {
      result.max_relative_error = e.relative_error;
      result.worst_parameter = e.name;
    }
    result.plain_max_relative_error = std::max(result.plain_max_relative_error, e.plain_relative_error);
    result.per_parameter.push_back(std::move(e));
  }
  model.zero_grad();
  return result;
}

GradCheckResult grad_check(const PdanetConfig& config, double eps, int input_size) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  if (config.channel_multiplier > 1.0 / 32.0) {
    throw std::invalid_argument("grad_check: channel_multiplier must be at most 1/32");
  }
  PdanetModel<double> model(config);
  model.check_input_size(input_size, input_size);
  // Zero biases put rectifiers fed by dead features exactly on their kink.
  std::uint64_t k = 0;
  for (auto* p : model.parameters()) {
    if (!p->name.ends_with("bias")) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = 0.2 * uniform_draw(config.seed, 70, k++) - 0.1;
  }

  Tensor<double> image(Shape{3, input_size, input_size});
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = 2.0 * uniform_draw(config.seed, 71, i) - 1.0;
  const int h = input_size / 8;
  DensityTargets t;
  t.sparse = random_map(h, h, config.seed, 72);
  t.dense = random_map(h, h, config.seed, 73);
  t.final = random_map(h, h, config.seed, 74);

  GradCheckResult merged;
  for (int label : {0, 1}) {
    t.label = label;
    keep_worst(merged, grad_check_model(model, image, t, eps));
  }
  return merged;
}

}  // namespace pdanet
