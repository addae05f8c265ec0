#pragma once

#include <cstdint>

#include "fmrlrec/matryoshka.hpp"
#include "fmrlrec/tensor.hpp"

namespace fmrlrec {

/// Linear recurrent unit with diagonal complex recurrence
///   h_k = lambda (.) h_{k-1} + gamma (.) (x_k B),   y_k = Re(h_k C) + x_k D,
/// lambda = exp(-exp(nu) + i theta). Input, hidden and output widths are equal.
template <typename T>
struct LruParams {
  Tensor<T> nu;          ///< [H] log of -log|lambda|
  Tensor<T> theta;       ///< [H] phase
  Tensor<T> gamma_norm;  ///< [H] input scale, sqrt(1 - |lambda|^2) at init
  MaskedLinear<T> b_re;  ///< [H_in, H]
  MaskedLinear<T> b_im;
  MaskedLinear<T> c_re;  ///< [H, H_out]
  MaskedLinear<T> c_im;
  MaskedLinear<T> d_skip;  ///< [H_in, H_out]
  bool input_norm = true;

  std::size_t width() const { return nu.numel(); }
};

/// Eigenvalues uniform on the annulus r_min <= |lambda| <= r_max (|lambda|^2
/// uniform), phases uniform on [0, 2 pi). B/C/D get variance-scaled normals.
/// \throws ParameterError unless 0 <= r_min < r_max <= 1.
template <typename T>
LruParams<T> init_ring(std::size_t width, double r_min, double r_max, std::uint64_t seed,
                       std::uint64_t site, const SizeLadder& ladder, bool use_mask = true,
                       bool input_norm = true);

/// lambda as a (re, im) pair on the tape.
template <typename T>
ComplexPair<T> lru_lambda(const LruParams<T>& p);

/// Differentiable scan h_k = lambda h_{k-1} + b_k over axis 1 of [B, L, H]
/// inputs (h_0 = 0). Returns [B, L, 2H] laid out as (re | im).
template <typename T>
Tensor<T> complex_linear_scan(const Tensor<T>& lambda_re, const Tensor<T>& lambda_im,
                              const Tensor<T>& b_re, const Tensor<T>& b_im);

/// Training path: associative scan, gradients recorded. x: [B, L, H].
template <typename T>
Tensor<T> lru_parallel_scan(const LruParams<T>& p, const Tensor<T>& x);

/// Inference path: step-by-step recurrence with O(H) state; no graph.
template <typename T>
Tensor<T> lru_sequential(const LruParams<T>& p, const Tensor<T>& x);

/// Width-m slice (prefix of every vector, slice_linear on every map).
template <typename T>
LruParams<T> slice_lru(const LruParams<T>& p, std::size_t m, bool detach);

}  // namespace fmrlrec
