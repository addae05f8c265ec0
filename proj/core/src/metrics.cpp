#include "fmrlrec/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fmrlrec/error.hpp"

namespace fmrlrec {

template <typename T>
std::size_t target_rank(std::span<const T> scores, Index target) {
  if (target < 0 || static_cast<std::size_t>(target) >= scores.size()) {
    throw IndexError("target " + std::to_string(target) + " outside " + std::to_string(scores.size()) + " scores");
  }
  const auto t = static_cast<std::size_t>(target);
  const T s = scores[t];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > s || (scores[i] == s && i < t)) ++rank;
  }
  return rank;
}

double ndcg_at(std::size_t rank, std::size_t k) {
  return rank >= 1 && rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

double recall_at(std::size_t rank, std::size_t k) { return rank >= 1 && rank <= k ? 1.0 : 0.0; }

double MetricValues::ndcg_at_k(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return ndcg[i];
  }
  throw ParameterError("NDCG@" + std::to_string(k) + " was not computed");
}

double MetricValues::recall_at_k(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recall[i];
  }
  throw ParameterError("Recall@" + std::to_string(k) + " was not computed");
}

MetricAccumulator::MetricAccumulator(std::vector<std::size_t> ks)
    : ks_(std::move(ks)), ndcg_sum_(ks_.size(), 0.0), recall_sum_(ks_.size(), 0.0) {
  for (auto k : ks_) {
    if (k == 0) throw ParameterError("metric cutoff k must be positive");
  }
}

void MetricAccumulator::add_rank(std::size_t rank) {
  for (std::size_t i = 0; i < ks_.size(); ++i) {
    ndcg_sum_[i] += ndcg_at(rank, ks_[i]);
    recall_sum_[i] += recall_at(rank, ks_[i]);
  }
  ++users_;
}

MetricValues MetricAccumulator::result() const {
  MetricValues v;
  v.ks = ks_;
  v.users = users_;
  const double n = users_ ? static_cast<double>(users_) : 1.0;
  for (std::size_t i = 0; i < ks_.size(); ++i) {
    v.ndcg.push_back(ndcg_sum_[i] / n);
    v.recall.push_back(recall_sum_[i] / n);
  }
  return v;
}

template <typename T>
MetricValues metrics_from_scores(const Tensor<T>& scores, std::span<const Index> targets,
                                 const std::vector<std::size_t>& ks) {
  if (scores.rank() != 2 || scores.extent(0) != targets.size()) {
    throw DimensionError("scores " + shape_to_string(scores.shape()) + " vs " + std::to_string(targets.size()) +
                         " targets");
  }
  MetricAccumulator acc(ks);
  const auto V = scores.extent(1);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    acc.add_rank(target_rank<T>(scores.data().subspan(r * V, V), targets[r]));
  }
  return acc.result();
}

namespace {

struct EvalBatch {
  SequenceBatch batch;
  std::vector<Index> targets;
  std::vector<std::size_t> users;
};

EvalBatch make_eval_batch(const SequenceDataset& ds, Split split, std::size_t begin, std::size_t end) {
  EvalBatch eb;
  std::size_t longest = 1;
  for (std::size_t u = begin; u < end; ++u) {
    longest = std::max(longest, std::min(split_input(ds, u, split).size(), ds.max_len));
  }
  eb.batch.batch = end - begin;
  eb.batch.length = longest;
  for (std::size_t u = begin; u < end; ++u) {
    const auto row = pad_truncate(split_input(ds, u, split), longest);
    eb.batch.items.insert(eb.batch.items.end(), row.begin(), row.end());
    eb.targets.push_back(split_target(ds, u, split));
    eb.users.push_back(u);
  }
  return eb;
}

template <typename T>
void mask_seen(Tensor<T>& scores, const SequenceDataset& ds, Split split, const EvalBatch& eb) {
  const auto V = scores.extent(1);
  auto data = scores.mutable_data();
  for (std::size_t r = 0; r < eb.users.size(); ++r) {
    for (auto item : split_input(ds, eb.users[r], split)) {
      if (item != eb.targets[r]) data[r * V + static_cast<std::size_t>(item)] = -std::numeric_limits<T>::infinity();
    }
  }
}

}  // namespace

template <typename T>
std::vector<MetricValues> evaluate_all(const ModelParams<T>& model, const SequenceDataset& ds, Split split,
                                       const EvalOptions& options) {
  NoGradGuard no_grad;
  const auto& ladder = model.config.ladder;
  std::vector<MetricAccumulator> acc(ladder.count(), MetricAccumulator(options.ks));
  const std::size_t bs = std::max<std::size_t>(1, options.batch_size);
  const ForwardContext ctx{};
  const auto table = item_embeddings(model);
  for (std::size_t begin = 0; begin < ds.num_users(); begin += bs) {
    const auto eb = make_eval_batch(ds, split, begin, std::min(ds.num_users(), begin + bs));
    std::vector<Tensor<T>> all;
    if (model.config.norm_mode == NormMode::segment) {
      const auto enc = encode(model, eb.batch, ctx, &table);
      const auto z = last_step(enc.hidden, eb.batch);
      for (auto m : ladder.sizes()) all.push_back(matmul_nt(slice_last(z, 0, m), slice_last(table, 0, m)));
    } else {
      all = forward_scores_all(model, eb.batch, ctx);
    }
    for (std::size_t j = 0; j < all.size(); ++j) {
      auto& scores = all[j];
      if (options.exclude_seen) mask_seen(scores, ds, split, eb);
      const auto V = scores.extent(1);
      for (std::size_t r = 0; r < eb.targets.size(); ++r) {
        acc[j].add_rank(target_rank<T>(scores.data().subspan(r * V, V), eb.targets[r]));
      }
    }
  }
  std::vector<MetricValues> out;
  for (const auto& a : acc) out.push_back(a.result());
  return out;
}

template <typename T>
MetricValues evaluate(const ModelParams<T>& model, const SequenceDataset& ds, Split split, std::size_t m,
                      const EvalOptions& options) {
  const auto j = model.config.ladder.position(m);
  if (model.config.norm_mode == NormMode::full && m != model.config.width) {
    return evaluate(extract_submodel(model, m), ds, split, m, options);
  }
  return evaluate_all(model, ds, split, options)[j];
}

std::vector<double> train_popularity(const SequenceDataset& ds) {
  std::vector<double> freq(ds.num_items(), 0.0);
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    for (auto item : ds.train_part(u)) freq[static_cast<std::size_t>(item)] += 1.0;
  }
  return freq;
}

MetricValues popularity_baseline(const SequenceDataset& ds, Split split, const EvalOptions& options) {
  const auto freq = train_popularity(ds);
  MetricAccumulator acc(options.ks);
  std::vector<double> scores;
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    const auto target = split_target(ds, u, split);
    if (options.exclude_seen) {
      scores = freq;
      for (auto item : split_input(ds, u, split)) {
        if (item != target) scores[static_cast<std::size_t>(item)] = -std::numeric_limits<double>::infinity();
      }
      acc.add_rank(target_rank<double>(scores, target));
    } else {
      acc.add_rank(target_rank<double>(freq, target));
    }
  }
  return acc.result();
}

std::string format_metrics_table(std::span<const std::size_t> sizes, const std::vector<MetricValues>& rows) {
  if (sizes.size() != rows.size() || rows.empty()) {
    throw DimensionError("metrics table: " + std::to_string(sizes.size()) + " sizes for " +
                         std::to_string(rows.size()) + " rows");
  }
  std::ostringstream out;
  out << "metric";
  for (auto m : sizes) out << "\tm=" << m;
  out << "\n";
  out.setf(std::ios::fixed);
  out.precision(4);
  const auto& ks = rows.front().ks;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    out << "NDCG@" << ks[i];
    for (const auto& r : rows) out << "\t" << r.ndcg[i];
    out << "\n";
  }
  for (std::size_t i = 0; i < ks.size(); ++i) {
    out << "Recall@" << ks[i];
    for (const auto& r : rows) out << "\t" << r.recall[i];
    out << "\n";
  }
  return out.str();
}

#define FMRLREC_INSTANTIATE_METRICS(T)                                                                  \
  template std::size_t target_rank(std::span<const T>, Index);                                          \
  template MetricValues metrics_from_scores(const Tensor<T>&, std::span<const Index>,                   \
                                            const std::vector<std::size_t>&);                           \
  template std::vector<MetricValues> evaluate_all(const ModelParams<T>&, const SequenceDataset&, Split, \
                                                  const EvalOptions&);                                  \
  template MetricValues evaluate(const ModelParams<T>&, const SequenceDataset&, Split, std::size_t,     \
                                 const EvalOptions&);

FMRLREC_INSTANTIATE_METRICS(float)
FMRLREC_INSTANTIATE_METRICS(double)

#undef FMRLREC_INSTANTIATE_METRICS

}  // namespace fmrlrec
