#pragma once

#include <random>
#include <vector>

#include "fmrlrec/tensor.hpp"

namespace testutil {

template <typename T = double>
fmrlrec::Tensor<T> random_tensor(fmrlrec::Shape shape, std::mt19937_64& gen, bool requires_grad = false,
                                 double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<T> v(fmrlrec::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(gen));
  return fmrlrec::Tensor<T>::from_vector(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
double max_abs_diff(const fmrlrec::Tensor<T>& a, const fmrlrec::Tensor<T>& b) {
  double m = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  if (da.size() != db.size()) return 1e300;
  for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(double(da[i]) - double(db[i])));
  return m;
}

}  // namespace testutil
