#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmrlrec/model.hpp"

namespace fmrlrec {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  ///< global gradient-norm clip; 0 disables
};

/// AdamW with decoupled weight decay:
///   theta <- theta - lr * wd * theta
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<NamedTensor<T>> params, AdamWConfig config);

  /// Applies one update from the current grads.
  /// \throws NumericalError (parameters untouched) if any gradient is not finite.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  const std::vector<NamedTensor<T>>& params() const { return params_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

  /// Global L2 norm of the current gradients.
  double grad_norm() const;

 private:
  std::vector<NamedTensor<T>> params_;
  AdamWConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace fmrlrec
