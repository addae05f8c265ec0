#pragma once

#include <string>
#include <vector>

#include "fmrlrec/tensor.hpp"
#include "oracles.hpp"

namespace oracle {

struct GradCheck {
  double max_relative_error = 0.0;
  std::string worst;  ///< "leaf[index] autodiff vs numeric"
};

/// Compares backward() on `loss_fn()` with central differences for every
/// entry of every leaf. `loss_fn` must rebuild the graph from the leaves.
template <typename F>
GradCheck gradcheck(std::vector<fmrlrec::Tensor<double>> leaves, F loss_fn, double step = 1e-5,
                    double floor = 1e-4) {
  for (auto& l : leaves) l.zero_grad();
  fmrlrec::backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (auto& l : leaves) {
    if (l.has_grad()) analytic.emplace_back(l.grad().begin(), l.grad().end());
    else analytic.emplace_back(l.numel(), 0.0);
  }
  GradCheck out;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto data = leaves[k].mutable_data();
    const auto numeric = central_difference(
        [&] {
          fmrlrec::NoGradGuard guard;
          return loss_fn().item();
        },
        data.data(), data.size(), step);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double e = relative_error(analytic[k][i], numeric[i], floor);
      if (e > out.max_relative_error || out.worst.empty()) {
        if (e >= out.max_relative_error) {
          out.max_relative_error = e;
          out.worst = "leaf " + std::to_string(k) + "[" + std::to_string(i) + "] " + std::to_string(analytic[k][i]) +
                      " vs " + std::to_string(numeric[i]);
        }
      }
    }
  }
  return out;
}

}  // namespace oracle
