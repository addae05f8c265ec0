#pragma once

#include <cstdint>

#include "fmrlrec/data.hpp"

namespace fmrlrec {

/// Desk-scale stand-in for a review dataset.
///
/// Items sit on one hidden cycle; a user starts at a random item and moves to
/// the cycle successor, or with probability `noise` jumps to a uniformly drawn
/// item. Text and image features are noisy random projections of a sinusoidal
/// encoding of cycle position, so they carry the transition structure.
struct SynthConfig {
  std::size_t users = 2000;
  std::size_t items = 500;
  double noise = 0.2;
  /// Zipf exponent of the popularity used for walk starts and jumps; 0 = uniform.
  double popularity_skew = 0.0;
  std::uint64_t seed = 0;
  std::size_t min_length = 8;
  std::size_t max_length = 22;
  std::size_t text_dim = 32;
  std::size_t image_dim = 16;
  double text_noise = 0.1;
  double image_noise = 0.2;
  std::size_t max_len = 50;  ///< model input length recorded in the dataset
};

/// \throws ParameterError if items < 10, noise outside [0, 1] or lengths invalid.
DatasetBundle synth_generate(const SynthConfig& config);

/// Position of each item index on the hidden cycle (test helper).
std::vector<std::size_t> synth_cycle_positions(const SynthConfig& config);

}  // namespace fmrlrec
