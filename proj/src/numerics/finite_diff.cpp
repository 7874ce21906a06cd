#include "livespeech/numerics/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace livespeech::numerics {

template <class T>
Tensor<T> finite_diff_gradient(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps,
                               const std::vector<std::size_t>* coords) {
  Tensor<T> grad(x.shape());
  Tensor<T> probe = x;
  std::vector<std::size_t> bad;
  auto visit = [&](std::size_t i) {
    const T orig = probe[i];
    probe[i] = orig + eps;
    const T up = f(probe);
    probe[i] = orig - eps;
    const T down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      bad.push_back(i);
      grad[i] = std::numeric_limits<T>::quiet_NaN();
      return;
    }
    grad[i] = (up - down) / (T(2) * eps);
  };
  if (coords) {
    for (auto i : *coords) {
      if (i >= x.numel()) throw ValidationError("finite_diff_gradient: coordinate out of range");
      visit(i);
    }
  } else {
    for (std::size_t i = 0; i < x.numel(); ++i) visit(i);
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "finite_diff_gradient: non-finite f at coordinates";
    for (auto i : bad) os << ' ' << i;
    throw NonFiniteProbe(std::move(bad), os.str());
  }
  return grad;
}

double relative_error(double a, double b, double floor) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

template Tensor<float> finite_diff_gradient<float>(const std::function<float(const Tensor<float>&)>&,
                                                   const Tensor<float>&, float, const std::vector<std::size_t>*);
template Tensor<double> finite_diff_gradient<double>(const std::function<double(const Tensor<double>&)>&,
                                                     const Tensor<double>&, double,
                                                     const std::vector<std::size_t>*);

}  // namespace livespeech::numerics
