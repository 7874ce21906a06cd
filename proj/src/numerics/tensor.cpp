#include "livespeech/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "livespeech/errors.hpp"

namespace livespeech::numerics {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ValidationError("tensor: data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_str(shape_));
  }
}

template <class T>
std::size_t Tensor<T>::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() <= 1) return 1;
  throw ValidationError("tensor: rows() needs rank <= 2, got " + shape_str(shape_));
}

template <class T>
std::size_t Tensor<T>::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  if (shape_.empty()) return 1;
  throw ValidationError("tensor: cols() needs rank <= 2, got " + shape_str(shape_));
}

template <class T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    throw ValidationError("tensor: item() on non-scalar of shape " + shape_str(shape_));
  }
  return data_[0];
}

template <class T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <class T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ValidationError("tensor: cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace livespeech::numerics
