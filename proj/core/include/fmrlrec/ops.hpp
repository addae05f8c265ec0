#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fmrlrec/tensor.hpp"

namespace fmrlrec {

using Index = std::int64_t;

/// Matrix product over the last axis of `a`: [..., p, q] x [q, r] -> [..., p, r].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// a . b^T with b stored row-major as [r, q]: [..., q] x [r, q] -> [..., r].
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise binary ops. `b` either matches `a` exactly or is a vector that
// broadcasts over the last axis of `a`.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Sum of all elements as a scalar tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> silu(const Tensor<T>& x);
template <typename T>
Tensor<T> exp(const Tensor<T>& x);
template <typename T>
Tensor<T> sin(const Tensor<T>& x);
template <typename T>
Tensor<T> cos(const Tensor<T>& x);

/// Layer normalisation over the last axis. With `segments` (strictly increasing
/// chunk ends, last == d) each chunk [s_{j-1}, s_j) gets its own mean and variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& alpha, const Tensor<T>& beta, T eps,
                     std::span<const std::size_t> segments = {});

struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t site = 0;
  std::uint64_t step = 0;
};

/// Inverted dropout. Outside training (or at rate 0) returns `x` itself.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, DropoutKey key);

/// Batch-mean of -log softmax(logits)[label], logits [B, V].
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const Index> labels);

template <typename T>
Tensor<T> concat_last(std::span<const Tensor<T>> parts);

/// x[..., begin:end]
template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t end);

/// x[begin:end, ...]
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end);

/// Row lookup into a [V, D] table; negative indices read a zero row. Output
/// shape is `index_shape` + [D]. Gradient scatter-adds into the table.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const Index> index, Shape index_shape);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Multiplies each last-axis row of `x` by a constant factor (no grad into factors).
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, std::span<const T> factors);

template <typename T>
struct ComplexPair {
  Tensor<T> re;
  Tensor<T> im;
};

/// (ar + i ai) * (br + i bi), elementwise over real/imaginary tensor pairs.
template <typename T>
ComplexPair<T> complex_mul(const Tensor<T>& ar, const Tensor<T>& ai, const Tensor<T>& br,
                           const Tensor<T>& bi);

namespace kernels {

/// C[M,N] += A[M,K] B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C);

/// C[K,N] += A[M,K]^T G[M,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* G, T* C);

template <typename T>
std::vector<T> transpose(std::size_t rows, std::size_t cols, const T* src);

}  // namespace kernels

}  // namespace fmrlrec
