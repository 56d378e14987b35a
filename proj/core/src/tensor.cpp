#include "pdanet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdanet {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.channels) + "," + std::to_string(s.height) + "," +
         std::to_string(s.width) + ")";
}

template <typename T>
void Tensor<T>::add(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw std::invalid_argument("tensor add: shape mismatch " + to_string(shape_) + " vs " +
                                to_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

template <typename T>
T Tensor<T>::sum() const {
  // Accumulate in double so float maps report counts without drift.
  double acc = 0.0;
  for (T v : data_) acc += static_cast<double>(v);
  return static_cast<T>(acc);
}

template <typename T>
T Tensor<T>::max_abs() const {
  T m = T(0);
  for (T v : data_) m = std::max(m, std::abs(v));
  return m;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace pdanet
