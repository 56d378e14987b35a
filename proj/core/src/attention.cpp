#include "pdanet/attention.hpp"

namespace pdanet {

template <typename T>
Csse<T>::Csse(const std::string& name, int c)
    : squeeze(name + ".fc1", c, (c + 1) / 2),
      excite(name + ".fc2", (c + 1) / 2, c),
      spatial(name + ".spatial", c, 1, 1),
      channels(c) {}

template <typename T>
void Csse<T>::init(InitRng& rng) {
  squeeze.init(rng);
  excite.init(rng);
  spatial.init(rng);
}

template <typename T>
void Csse<T>::collect(std::vector<Parameter<T>*>& out) {
  for (auto* p : {&squeeze.weight, &squeeze.bias, &excite.weight, &excite.bias, &spatial.weight,
                  &spatial.bias}) {
    out.push_back(p);
  }
}

template <typename T>
Var<T> Csse<T>::channel_gates(Tape<T>& tape, const Var<T>& x) {
  auto pooled = ops::adaptive_avg_pool(tape, x, 1, 1);
  return ops::sigmoid(tape, ops::linear(tape, ops::linear(tape, pooled, squeeze), excite));
}

template <typename T>
Var<T> Csse<T>::spatial_gates(Tape<T>& tape, const Var<T>& x) {
  return ops::sigmoid(tape, ops::conv2d(tape, x, spatial));
}

template <typename T>
Var<T> Csse<T>::channel_attention(Tape<T>& tape, const Var<T>& x) {
  return ops::mul_channel(tape, x, channel_gates(tape, x));
}

template <typename T>
Var<T> Csse<T>::spatial_attention(Tape<T>& tape, const Var<T>& x) {
  return ops::mul_spatial(tape, x, spatial_gates(tape, x));
}

template <typename T>
Var<T> Csse<T>::forward(Tape<T>& tape, const Var<T>& x) {
  return ops::maximum(tape, channel_attention(tape, x), spatial_attention(tape, x));
}

template struct Csse<float>;
template struct Csse<double>;

}  // namespace pdanet
