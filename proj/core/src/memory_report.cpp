#include "fmrlrec/memory_report.hpp"

#include <cstdio>

#include "fmrlrec/error.hpp"

namespace fmrlrec {

namespace {

struct Counts {
  double independent = 0;
  double nested = 0;
};

// Both schemes over the first `t` ladder entries; `linear` adds the 1-D term.
Counts count_prefix(const SizeLadder& ladder, std::size_t t, double per_layer, bool linear) {
  Counts c;
  for (std::size_t j = 0; j < t; ++j) {
    const auto m = static_cast<double>(ladder[j]);
    c.independent += per_layer * (m * m + (linear ? m : 0.0));
  }
  const auto top = static_cast<double>(ladder[t - 1]);
  c.nested = per_layer * (top * top + (linear ? top : 0.0));
  return c;
}

}  // namespace

MemoryReport memory_report(std::size_t layers, double gamma, std::size_t batch, std::size_t length,
                           const SizeLadder& ladder) {
  if (layers == 0 || !(gamma > 0) || batch == 0 || length == 0) {
    throw ParameterError("memory_report: layers, gamma, batch and length must be positive");
  }
  MemoryReport r;
  r.layers = layers;
  r.gamma = gamma;
  r.batch = batch;
  r.length = length;
  r.ladder = ladder;
  const auto D = static_cast<double>(ladder.max());
  const auto n = static_cast<double>(layers);
  r.delta = static_cast<double>(batch) * static_cast<double>(length) / D;

  const auto full = count_prefix(ladder, ladder.count(), n * gamma, false);
  r.params_fmrl = full.nested;
  r.params_independent = full.independent;
  r.acts_fmrl = r.delta * full.nested;
  r.acts_independent = r.delta * full.independent;
  r.ratio_R = r.params_independent / r.params_fmrl;
  r.saving_Rs = r.ratio_R - 1.0;

  const auto all = count_prefix(ladder, ladder.count(), n * gamma, true);
  r.params_fmrl_all = all.nested;
  r.params_independent_all = all.independent;
  r.ratio_R_all = all.independent / all.nested;
  r.saving_Rs_all = r.ratio_R_all - 1.0;

  for (std::size_t t = 1; t <= ladder.count(); ++t) {
    const auto c2 = count_prefix(ladder, t, 1.0, false);
    const auto ca = count_prefix(ladder, t, 1.0, true);
    r.cumulative_Rs.push_back(c2.independent / c2.nested - 1.0);
    r.cumulative_Rs_all.push_back(ca.independent / ca.nested - 1.0);
  }

  r.weights_saved = n * r.saving_Rs * D * (gamma * D);
  r.activations_saved = n * r.saving_Rs * static_cast<double>(batch) * static_cast<double>(length) * (gamma * D);
  return r;
}

std::string format_memory_report(const MemoryReport& r) {
  std::string out;
  char line[256];
  auto emit = [&](const char* key, double value) {
    std::snprintf(line, sizeof line, "%-26s%.6g\n", key, value);
    out += line;
  };
  std::snprintf(line, sizeof line, "%-26s%s\n", "ladder", r.ladder.to_string().c_str());
  out += line;
  emit("layers", static_cast<double>(r.layers));
  emit("gamma", r.gamma);
  emit("batch", static_cast<double>(r.batch));
  emit("length", static_cast<double>(r.length));
  emit("delta", r.delta);
  emit("params_fmrl", r.params_fmrl);
  emit("params_independent", r.params_independent);
  emit("acts_fmrl", r.acts_fmrl);
  emit("acts_independent", r.acts_independent);
  emit("ratio_R", r.ratio_R);
  emit("saving_Rs", r.saving_Rs);
  emit("params_fmrl_all", r.params_fmrl_all);
  emit("params_independent_all", r.params_independent_all);
  emit("ratio_R_all", r.ratio_R_all);
  emit("saving_Rs_all", r.saving_Rs_all);
  emit("weights_saved", r.weights_saved);
  emit("activations_saved", r.activations_saved);
  out += "\nsize\tRs_2d\tRs_all\n";
  for (std::size_t t = 0; t < r.cumulative_Rs.size(); ++t) {
    std::snprintf(line, sizeof line, "%zu\t%.2f%%\t%.2f%%\n", r.ladder[t], 100.0 * r.cumulative_Rs[t],
                  100.0 * r.cumulative_Rs_all[t]);
    out += line;
  }
  return out;
}

}  // namespace fmrlrec
