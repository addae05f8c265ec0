#pragma once

#include <span>
#include <string>
#include <vector>

#include "fmrlrec/data.hpp"
#include "fmrlrec/model.hpp"

namespace fmrlrec {

/// 1-based rank of `target` under descending scores. Ties go to the lower
/// item index, so the rank is a pure function of the scores.
template <typename T>
std::size_t target_rank(std::span<const T> scores, Index target);

/// 1 / log2(rank + 1) if rank <= k, else 0.
double ndcg_at(std::size_t rank, std::size_t k);
double recall_at(std::size_t rank, std::size_t k);

/// NDCG@k and Recall@k averaged over users for each k.
struct MetricValues {
  std::vector<std::size_t> ks;
  std::vector<double> ndcg;
  std::vector<double> recall;
  std::size_t users = 0;

  double ndcg_at_k(std::size_t k) const;
  double recall_at_k(std::size_t k) const;
};

/// Sums per-user contributions in a fixed order.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::vector<std::size_t> ks = {5, 10});
  void add_rank(std::size_t rank);
  MetricValues result() const;

 private:
  std::vector<std::size_t> ks_;
  std::vector<double> ndcg_sum_;
  std::vector<double> recall_sum_;
  std::size_t users_ = 0;
};

/// Metrics of a full score matrix [users, |V|] against one target per row.
template <typename T>
MetricValues metrics_from_scores(const Tensor<T>& scores, std::span<const Index> targets,
                                 const std::vector<std::size_t>& ks = {5, 10});

struct EvalOptions {
  std::vector<std::size_t> ks = {5, 10};
  std::size_t batch_size = 256;
  bool exclude_seen = false;  ///< mask items in the input sequence (except the target)
};

/// Per-size metrics on a split; entry j is ladder[j]. One forward pass per
/// batch serves every size in segment mode.
template <typename T>
std::vector<MetricValues> evaluate_all(const ModelParams<T>& model, const SequenceDataset& ds, Split split,
                                       const EvalOptions& options = {});

/// Metrics of the width-m submodel. \throws ParameterError if m is not in the ladder.
template <typename T>
MetricValues evaluate(const ModelParams<T>& model, const SequenceDataset& ds, Split split, std::size_t m,
                      const EvalOptions& options = {});

/// Item frequencies over the training parts s[0:n-2].
std::vector<double> train_popularity(const SequenceDataset& ds);

/// Ranks every user's target by training-set popularity.
MetricValues popularity_baseline(const SequenceDataset& ds, Split split, const EvalOptions& options = {});

/// Rows = metric (NDCG@k, Recall@k), columns = sizes; tab separated.
std::string format_metrics_table(std::span<const std::size_t> sizes, const std::vector<MetricValues>& rows);

}  // namespace fmrlrec
