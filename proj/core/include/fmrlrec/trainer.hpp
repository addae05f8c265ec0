#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fmrlrec/checkpoint.hpp"
#include "fmrlrec/config.hpp"
#include "fmrlrec/data.hpp"
#include "fmrlrec/metrics.hpp"
#include "fmrlrec/model.hpp"

namespace fmrlrec {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  std::size_t batch_size = 64;
  double dropout = 0.1;
  std::string ladder = "8..64";
  std::size_t width = 64;
  std::size_t blocks = 2;
  std::size_t ffn_k = 2;
  NormMode norm_mode = NormMode::segment;
  ModalityMode modality_mode = ModalityMode::both;
  double r_min = 0.0;
  double r_max = 0.1;
  bool input_norm = true;
  bool use_masks = true;
  std::uint64_t seed = 0;
  int precision = 32;
  double clip_norm = 0.0;
  bool exclude_seen = false;
  std::string loss_weights;  ///< comma-separated, one per ladder size; empty = uniform
  std::size_t eval_batch = 256;
  bool all_positions = true;  ///< next-item loss at every position, not only the last

  /// \throws ConfigError on unknown keys or bad values.
  static TrainConfig from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
  void validate() const;

  SizeLadder size_ladder() const;
  std::vector<double> size_weights() const;
  ModelConfig model_config(const DatasetBundle& data) const;
};

/// Stops after `patience` evaluations without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  /// Records the metric of `epoch`; returns true when training should stop.
  bool update(std::size_t epoch, double metric);
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = -1.0;
  bool improved_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::vector<double> valid_ndcg10;  ///< one per ladder size
};

/// One line per epoch: epoch, train_loss, valid NDCG@10 per size (tab separated).
std::string format_history(const std::vector<EpochRecord>& history, const SizeLadder& ladder);

template <typename T>
struct TrainResult {
  ModelParams<T> model;  ///< best-validation model
  Checkpoint checkpoint;  ///< model, optimizer state and config echo at the best epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::size_t epochs_run = 0;
  bool diverged = false;
  std::string stop_reason;
  double seconds = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::ostream* log = nullptr;
};

/// Training batches: per user the most recent max_len+1 items of s[0:n-2],
/// inputs are all but the last, targets are shifted by one.
struct TrainExample {
  std::vector<Index> inputs;
  std::vector<Index> targets;
};
std::vector<TrainExample> training_examples(const SequenceDataset& ds, bool all_positions);
void fill_batch(const std::vector<TrainExample>& examples, std::span<const std::size_t> order, SequenceBatch& batch,
                std::vector<Index>& targets);

template <typename T>
TrainResult<T> train(const TrainConfig& config, const DatasetBundle& data, const TrainHooks& hooks = {});

/// Builds the (untrained) model for `config` on `data`.
template <typename T>
ModelParams<T> make_model(const TrainConfig& config, const DatasetBundle& data);

/// Extracts every ladder size and evaluates it standalone.
template <typename T>
std::vector<MetricValues> size_curve(const ModelParams<T>& model, const SequenceDataset& ds, Split split,
                                     const EvalOptions& options = {});

/// Per metric, a "# name" header then "size<TAB>value" lines.
std::string format_series(std::span<const std::size_t> sizes, const std::vector<MetricValues>& rows);

}  // namespace fmrlrec
