#pragma once

// Minimal reverse-mode differentiation over C x H x W tensors.
//
// A Tape records every operation applied while it is recording; calling
// backward() on a scalar result walks the records in reverse and accumulates
// gradients into intermediate nodes and into the Parameters the operations
// touched. A non-recording tape runs the same operations without keeping any
// history, so intermediates are released as soon as their Vars go away.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdanet/tensor.hpp"

namespace pdanet {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  /// Leaf that never receives gradient (inputs, targets).
  Var<T> constant(Tensor<T> value) const;

  /// Leaf that accumulates gradient (used by checks on intermediate inputs).
  Var<T> leaf(Tensor<T> value);

  /// Registers an op result. The callback is dropped when not recording.
  Var<T> record(Tensor<T> value, std::function<void(Node<T>&)> backward);

  /// Seeds d(root)/d(root) = 1 and propagates. Root must hold one element.
  void backward(const Var<T>& root);

  std::size_t size() const { return nodes_.size(); }

  /// Piecewise ops (rectifier signs, max selections, pooling argmax, loss
  /// clipping) route each discrete choice through decide(). Record keeps the
  /// choices; Replay forces a previously recorded sequence so a perturbed
  /// pass stays on the same smooth piece.
  enum class Decisions { Free, Record, Replay };

  void record_decisions() {
    mode_ = Decisions::Record;
    decisions_.clear();
  }
  void replay_decisions(std::vector<std::uint32_t> d) {
    mode_ = Decisions::Replay;
    decisions_ = std::move(d);
    cursor_ = 0;
  }
  Decisions decision_mode() const { return mode_; }
  const std::vector<std::uint32_t>& decisions() const { return decisions_; }

  std::uint32_t decide(std::uint32_t natural) {
    switch (mode_) {
      case Decisions::Free:
        return natural;
      case Decisions::Record:
        decisions_.push_back(natural);
        return natural;
      case Decisions::Replay:
        if (cursor_ >= decisions_.size()) throw std::logic_error("tape: decision replay exhausted");
        return decisions_[cursor_++];
    }
    return natural;
  }

 private:
  bool recording_;
  Decisions mode_ = Decisions::Free;
  std::vector<std::uint32_t> decisions_;
  std::size_t cursor_ = 0;
  std::vector<Var<T>> nodes_;
};

/// Deterministic 64-bit stream used for parameter initialisation; avoids
/// std::uniform_real_distribution, whose output differs across standard libraries.
class InitRng {
 public:
  explicit InitRng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

 private:
  std::mt19937_64 engine_;
};

/// Same-padded, stride-1 convolution with optional dilation.
/// Weight layout is (out, in, k*k).
template <typename T>
struct Conv2d {
  Parameter<T> weight;
  Parameter<T> bias;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int dilation = 1;

  Conv2d() = default;
  Conv2d(std::string name, int in, int out, int kernel_size, int dilation_rate = 1);

  /// Fan-in scaled uniform weights, zero bias.
  void init(InitRng& rng);
};

/// Fully connected layer over a (n, 1, 1) vector.
template <typename T>
struct Linear {
  Parameter<T> weight;  // (out, in, 1)
  Parameter<T> bias;    // (out, 1, 1)
  int in_features = 0;
  int out_features = 0;

  Linear() = default;
  Linear(std::string name, int in, int out);
  void init(InitRng& rng);
};

namespace ops {

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, Conv2d<T>& conv);
template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, Linear<T>& fc);
template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x);
/// 2x2, stride 2. Odd trailing rows/columns are dropped.
template <typename T>
Var<T> max_pool2(Tape<T>& tape, const Var<T>& x);
/// Averages over bins [floor(i*H/oh), ceil((i+1)*H/oh)).
template <typename T>
Var<T> adaptive_avg_pool(Tape<T>& tape, const Var<T>& x, int out_h, int out_w);
/// Half-pixel aligned bilinear resampling.
template <typename T>
Var<T> upsample_bilinear(Tape<T>& tape, const Var<T>& x, int out_h, int out_w);
template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
/// x (C,H,W) times gate (C,1,1).
template <typename T>
Var<T> mul_channel(Tape<T>& tape, const Var<T>& x, const Var<T>& gate);
/// x (C,H,W) times gate (1,H,W).
template <typename T>
Var<T> mul_spatial(Tape<T>& tape, const Var<T>& x, const Var<T>& gate);
/// Element-wise max. Ties send the gradient to `a`.
template <typename T>
Var<T> maximum(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> concat_channels(Tape<T>& tape, const std::vector<Var<T>>& parts);
template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, T factor);
/// Mean of squared differences against a fixed target; returns (1,1,1).
template <typename T>
Var<T> mse(Tape<T>& tape, const Var<T>& pred, const Tensor<T>& target);
/// Binary cross-entropy of a (1,1,1) probability, clipped to [1e-7, 1-1e-7].
template <typename T>
Var<T> bce(Tape<T>& tape, const Var<T>& prob, int label);

}  // namespace ops
}  // namespace pdanet
