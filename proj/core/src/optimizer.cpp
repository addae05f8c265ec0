#include "fmrlrec/optimizer.hpp"

#include <cmath>

#include "fmrlrec/error.hpp"

namespace fmrlrec {

template <typename T>
AdamW<T>::AdamW(std::vector<NamedTensor<T>> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0) || config_.weight_decay < 0 || !(config_.eps > 0) || config_.beta1 < 0 ||
      config_.beta1 >= 1 || config_.beta2 < 0 || config_.beta2 >= 1 || config_.clip_norm < 0) {
    throw ParameterError("AdamW: invalid hyperparameters");
  }
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad() || !p.tensor.is_leaf()) {
      throw ParameterError("AdamW: parameter '" + p.name + "' is not a trainable leaf");
    }
    m_.emplace_back(p.tensor.numel(), T{0});
    v_.emplace_back(p.tensor.numel(), T{0});
  }
}

template <typename T>
double AdamW<T>::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (auto g : p.tensor.grad()) s += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(s);
}

template <typename T>
void AdamW<T>::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    const auto g = p.tensor.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericalError("non-finite gradient " + std::to_string(g[i]) + " in '" + p.name + "' at flat index " +
                             std::to_string(i) + " (step " + std::to_string(t_ + 1) + ")");
      }
    }
  }
  T clip = T{1};
  if (config_.clip_norm > 0) {
    const double norm = grad_norm();
    if (norm > config_.clip_norm) clip = static_cast<T>(config_.clip_norm / norm);
  }
  ++t_;
  const T lr = static_cast<T>(config_.lr);
  const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
  const T eps = static_cast<T>(config_.eps);
  const T decay = static_cast<T>(1.0 - config_.lr * config_.weight_decay);
  const T c1 = static_cast<T>(1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(config_.beta2, static_cast<double>(t_)));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k].tensor;
    auto w = p.mutable_data();
    if (config_.weight_decay != 0) {
      for (auto& x : w) x *= decay;
    }
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T gi = g[i] * clip;
      m[i] = b1 * m[i] + (T{1} - b1) * gi;
      v[i] = b2 * v[i] + (T{1} - b2) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace fmrlrec
