/** \file matryoshka.hpp
 *  \brief Nested-width weights: size ladders, block padding masks, the masked
 *  weight operator and submodel slicing.
 *
 * A weight W in R^{d1 x d2} is used as x . W (rows index inputs). For a ladder
 * M = {m_0 < 2 m_0 < ... < D} the mask keeps, for every chunk j, the block of W
 * that maps input prefix [0, M[j]) to output chunk j. Any prefix [0, m) of the
 * output then depends only on the input prefix, so slicing the trained weight
 * yields a self-contained width-m layer.
 */
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fmrlrec/ops.hpp"
#include "fmrlrec/tensor.hpp"

namespace fmrlrec {

/** \brief Ordered set of extractable widths, each twice the previous. */
class SizeLadder {
 public:
  SizeLadder() = default;
  /// Validates: non-empty, every entry a power of two >= 2, each twice the previous.
  explicit SizeLadder(std::vector<std::size_t> sizes);

  static SizeLadder doubling(std::size_t min_size, std::size_t max_size);
  /// Parses "8,16,32" or "8..64".
  static SizeLadder parse(const std::string& text);

  std::span<const std::size_t> sizes() const { return sizes_; }
  std::size_t count() const { return sizes_.size(); }
  std::size_t min() const { return sizes_.front(); }
  std::size_t max() const { return sizes_.back(); }
  std::size_t operator[](std::size_t j) const { return sizes_[j]; }
  bool contains(std::size_t m) const;
  std::size_t position(std::size_t m) const;

  /// Chunk j spans [chunk_begin(j), sizes[j]).
  std::size_t chunk_begin(std::size_t j) const { return j == 0 ? 0 : sizes_[j - 1]; }

  /// Sizes up to and including m (m must be in the ladder).
  SizeLadder prefix_through(std::size_t m) const;
  /// The same ladder scaled by k; used as layer-norm segments or mask chunks on kD axes.
  std::vector<std::size_t> scaled_ends(std::size_t k) const;

  std::string to_string() const;
  bool operator==(const SizeLadder&) const = default;

 private:
  std::vector<std::size_t> sizes_;
};

/** \brief Shape relation of a 2-D weight to the model width D. */
enum class LinearCase {
  up,           ///< D x kD
  down,         ///< kD x D
  square,       ///< D x D
  output_only,  ///< fixed x D; only output columns scale with D
};

std::string to_string(LinearCase kind);
LinearCase parse_linear_case(const std::string& text);

/// Expected (d_in, d_out) for a case at full width D; output_only takes d_in as given.
std::pair<std::size_t, std::size_t> case_extents(LinearCase kind, std::size_t width,
                                                 std::size_t scale_k, std::size_t fixed_in = 0);

/** \brief Binary padding mask with ones exactly on the per-chunk blocks.
 *
 * up:     block [0:M[j], k M[j-1] : k M[j]] = 1
 * down:   block [0:k M[j], M[j-1] : M[j]]   = 1
 * square: up with k = 1
 * output_only: all ones
 *
 * \throws ConfigError when (d1, d2) does not fit the case and the ladder maximum.
 */
template <typename T>
Tensor<T> build_mask(std::size_t d1, std::size_t d2, LinearCase kind, const SizeLadder& ladder);

/** \brief A 2-D weight together with its padding mask and scale factor k. */
template <typename T>
struct MaskedLinear {
  Tensor<T> weight;  ///< [d_in, d_out]
  Tensor<T> bias;    ///< [d_out], undefined when the layer has none
  Tensor<T> mask;    ///< same shape as weight; undefined for standalone (extracted) layers
  LinearCase kind = LinearCase::square;
  std::size_t scale_k = 1;
  SizeLadder ladder;

  std::size_t in_features() const { return weight.extent(0); }
  std::size_t out_features() const { return weight.extent(1); }
  bool masked() const { return mask.defined(); }
};

/// Fresh layer. Weights ~ N(0, init_std^2) keyed by (seed, site); masked
/// entries start at exactly zero. Bias starts at zero.
template <typename T>
MaskedLinear<T> make_masked_linear(std::size_t d_in, std::size_t d_out, LinearCase kind,
                                   std::size_t scale_k, const SizeLadder& ladder, bool with_bias,
                                   bool use_mask, double init_std, std::uint64_t seed,
                                   std::uint64_t site);

/// mask (.) weight, recorded on the tape; the weight itself when unmasked.
template <typename T>
Tensor<T> fmrlrec_apply(const MaskedLinear<T>& layer);

/// x . fmrlrec_apply(layer) (+ bias)
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const MaskedLinear<T>& layer);

/// Reference for linear_forward: per-chunk slice products, concatenated.
/// Uses plain loops only; never touches the mask.
template <typename T>
Tensor<T> chunked_forward_oracle(const Tensor<T>& x, const MaskedLinear<T>& layer);

/// Width-m slice of a layer (mask applied first). The result has no mask.
/// With `detach` the slice becomes an independent leaf; otherwise gradients
/// flow back into the full layer.
template <typename T>
MaskedLinear<T> slice_linear(const MaskedLinear<T>& layer, std::size_t m, bool detach);

}  // namespace fmrlrec
