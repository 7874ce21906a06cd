#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "livespeech/errors.hpp"
#include "livespeech/numerics/tensor.hpp"

namespace livespeech::numerics {

/// Thrown when f is not finite at some probe point.
class NonFiniteProbe : public ValidationError {
 public:
  NonFiniteProbe(std::vector<std::size_t> coords, const std::string& what)
      : ValidationError(what), coordinates(std::move(coords)) {}
  std::vector<std::size_t> coordinates;
};

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for each
/// coordinate i, or only for `coords` when given (other entries stay zero).
template <class T>
Tensor<T> finite_diff_gradient(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps,
                               const std::vector<std::size_t>* coords = nullptr);

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
/// turning round-off into huge relative errors.
double relative_error(double a, double b, double floor = 1e-8);

extern template Tensor<float> finite_diff_gradient<float>(const std::function<float(const Tensor<float>&)>&,
                                                          const Tensor<float>&, float,
                                                          const std::vector<std::size_t>*);
extern template Tensor<double> finite_diff_gradient<double>(const std::function<double(const Tensor<double>&)>&,
                                                            const Tensor<double>&, double,
                                                            const std::vector<std::size_t>*);

}  // namespace livespeech::numerics
