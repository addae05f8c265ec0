#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fmrlrec/matryoshka.hpp"

namespace fmrlrec {

/// Parameter/activation counts for one nested training run versus training
/// every ladder width on its own.
///
/// The 2-D count charges gamma * m^2 per layer and width; the all-parameter
/// count adds gamma * m for the 1-D weights of the same layer.
struct MemoryReport {
  std::size_t layers = 0;
  double gamma = 0;
  std::size_t batch = 0;
  std::size_t length = 0;
  double delta = 0;  ///< B * L / D
  SizeLadder ladder;

  double params_fmrl = 0;
  double params_independent = 0;
  double acts_fmrl = 0;
  double acts_independent = 0;
  double ratio_R = 0;
  double saving_Rs = 0;

  double params_fmrl_all = 0;
  double params_independent_all = 0;
  double ratio_R_all = 0;
  double saving_Rs_all = 0;

  /// R_s restricted to ladder prefixes {m_0}, {m_0, m_1}, ... (first entry is 0).
  std::vector<double> cumulative_Rs;
  std::vector<double> cumulative_Rs_all;

  /// n * R_s * D * (gamma D): weights that independent training would add.
  double weights_saved = 0;
  /// n * R_s * B * L * (gamma D): activations that independent training would add.
  double activations_saved = 0;
};

MemoryReport memory_report(std::size_t layers, double gamma, std::size_t batch, std::size_t length,
                           const SizeLadder& ladder);

/// Human-readable table; also the output of `fmrlrec analyze-memory`.
std::string format_memory_report(const MemoryReport& report);

}  // namespace fmrlrec
