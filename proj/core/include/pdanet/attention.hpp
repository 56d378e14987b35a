#pragma once

#include <string>
#include <vector>

#include "pdanet/autograd.hpp"

namespace pdanet {

/// Concurrent channel and spatial squeeze-excitation.
///
/// Channel branch: global average pool -> fc (C -> ceil(C/2)) -> fc (-> C)
/// -> sigmoid, applied per channel. Spatial branch: 1x1 conv (C -> 1) ->
/// sigmoid, applied per pixel. The block output is the element-wise max of
/// the two recalibrated feature maps.
template <typename T>
struct Csse {
  Linear<T> squeeze;
  Linear<T> excite;
  Conv2d<T> spatial;
  int channels = 0;

  Csse() = default;
  Csse(const std::string& name, int channels);

  void init(InitRng& rng);
  void collect(std::vector<Parameter<T>*>& out);

  /// Per-channel gates, shape (C,1,1), each in (0,1).
  Var<T> channel_gates(Tape<T>& tape, const Var<T>& x);
  /// Per-pixel gates, shape (1,H,W), each in (0,1).
  Var<T> spatial_gates(Tape<T>& tape, const Var<T>& x);

  Var<T> channel_attention(Tape<T>& tape, const Var<T>& x);
  Var<T> spatial_attention(Tape<T>& tape, const Var<T>& x);
  Var<T> forward(Tape<T>& tape, const Var<T>& x);
};

extern template struct Csse<float>;
extern template struct Csse<double>;

}  // namespace pdanet
