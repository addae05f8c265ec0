#include "fmrlrec/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "fmrlrec/error.hpp"
#include "fmrlrec/optimizer.hpp"
#include "fmrlrec/rng.hpp"

namespace fmrlrec {

namespace {

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "learning_rate", "weight_decay", "max_epochs", "patience",     "batch_size",   "dropout",
      "ladder",        "width",        "blocks",     "ffn_k",        "norm_mode",    "modality_mode",
      "r_min",         "r_max",        "input_norm", "use_masks",    "seed",         "precision",
      "clip_norm",     "exclude_seen", "loss_weights", "eval_batch", "all_positions"};
  return keys;
}

constexpr std::uint64_t kShuffleSite = 0x5348;

}  // namespace

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  for (const auto& [k, v] : kv.entries()) {
    bool known = false;
    for (const auto& key : known_keys()) known = known || key == k;
    if (!known) throw ConfigError("unknown training option '" + k + "'");
  }
  TrainConfig c;
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.max_epochs = kv.get_uint("max_epochs", c.max_epochs);
  c.patience = kv.get_uint("patience", c.patience);
  c.batch_size = kv.get_uint("batch_size", c.batch_size);
  c.dropout = kv.get_double("dropout", c.dropout);
  c.ladder = kv.get_string("ladder", c.ladder);
  c.width = kv.get_uint("width", 0);
  c.blocks = kv.get_uint("blocks", c.blocks);
  c.ffn_k = kv.get_uint("ffn_k", c.ffn_k);
  try {
    c.norm_mode = parse_norm_mode(kv.get_string("norm_mode", to_string(c.norm_mode)));
    c.modality_mode = parse_modality_mode(kv.get_string("modality_mode", to_string(c.modality_mode)));
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  c.r_min = kv.get_double("r_min", c.r_min);
  c.r_max = kv.get_double("r_max", c.r_max);
  c.input_norm = kv.get_bool("input_norm", c.input_norm);
  c.use_masks = kv.get_bool("use_masks", c.use_masks);
  c.seed = kv.get_uint("seed", c.seed);
  c.precision = static_cast<int>(kv.get_int("precision", c.precision));
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.exclude_seen = kv.get_bool("exclude_seen", c.exclude_seen);
  c.loss_weights = kv.get_string("loss_weights", c.loss_weights);
  c.eval_batch = kv.get_uint("eval_batch", c.eval_batch);
  c.all_positions = kv.get_bool("all_positions", c.all_positions);
  if (c.width == 0) c.width = c.size_ladder().max();
  c.validate();
  return c;
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("learning_rate", learning_rate);
  kv.set("weight_decay", weight_decay);
  kv.set("max_epochs", std::uint64_t{max_epochs});
  kv.set("patience", std::uint64_t{patience});
  kv.set("batch_size", std::uint64_t{batch_size});
  kv.set("dropout", dropout);
  kv.set("ladder", ladder);
  kv.set("width", std::uint64_t{width});
  kv.set("blocks", std::uint64_t{blocks});
  kv.set("ffn_k", std::uint64_t{ffn_k});
  kv.set("norm_mode", to_string(norm_mode));
  kv.set("modality_mode", to_string(modality_mode));
  kv.set("r_min", r_min);
  kv.set("r_max", r_max);
  kv.set("input_norm", input_norm);
  kv.set("use_masks", use_masks);
  kv.set("seed", seed);
  kv.set("precision", precision);
  kv.set("clip_norm", clip_norm);
  kv.set("exclude_seen", exclude_seen);
  kv.set("loss_weights", loss_weights);
  kv.set("eval_batch", std::uint64_t{eval_batch});
  kv.set("all_positions", all_positions);
  return kv;
}

SizeLadder TrainConfig::size_ladder() const {
  try {
    return SizeLadder::parse(ladder);
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("ladder: ") + e.what());
  }
}

std::vector<double> TrainConfig::size_weights() const {
  std::vector<double> w;
  if (trim(loss_weights).empty()) return w;
  for (const auto& tok : split(loss_weights, ',')) w.push_back(parse_double(tok, "loss_weights"));
  return w;
}

void TrainConfig::validate() const {
  const auto l = size_ladder();
  if (width != l.max()) {
    throw ConfigError("width " + std::to_string(width) + " must equal the ladder maximum " + std::to_string(l.max()));
  }
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
  if (!(r_min >= 0 && r_min < r_max && r_max <= 1)) throw ConfigError("ring radii need 0 <= r_min < r_max <= 1");
  if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
  if (blocks < 1 || ffn_k < 1) throw ConfigError("blocks and ffn_k must be positive");
  if (eval_batch < 1) throw ConfigError("eval_batch must be at least 1");
  const auto w = size_weights();
  if (!w.empty() && w.size() != l.count()) {
    throw ConfigError("loss_weights has " + std::to_string(w.size()) + " entries for " + std::to_string(l.count()) +
                      " ladder sizes");
  }
}

ModelConfig TrainConfig::model_config(const DatasetBundle& data) const {
  validate();
  ModelConfig m;
  m.width = width;
  m.ladder = size_ladder();
  m.blocks = blocks;
  m.ffn_k = ffn_k;
  m.norm_mode = norm_mode;
  m.modality_mode = modality_mode;
  m.r_min = r_min;
  m.r_max = r_max;
  m.input_norm = input_norm;
  m.use_masks = use_masks;
  m.dropout = dropout;
  m.seed = seed;
  m.num_items = data.data.num_items();
  const bool text = modality_mode == ModalityMode::both || modality_mode == ModalityMode::text;
  const bool image = modality_mode == ModalityMode::both || modality_mode == ModalityMode::image;
  m.lang_dim = text ? data.lang.cols : 0;
  m.image_dim = image ? data.image.cols : 0;
  if ((text && data.lang.cols == 0) || (image && data.image.cols == 0)) {
    throw DataError("modality mode " + to_string(modality_mode) + " needs embeddings the dataset does not have");
  }
  return m;
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience_ < 1) throw ParameterError("patience must be at least 1");
}

bool EarlyStopping::update(std::size_t epoch, double metric) {
  improved_ = best_epoch_ == 0 || metric > best_;
  if (improved_) {
    best_ = metric;
    best_epoch_ = epoch;
    stale_ = 0;
    return false;
  }
  return ++stale_ >= patience_;
}

std::string format_history(const std::vector<EpochRecord>& history, const SizeLadder& ladder) {
  std::ostringstream out;
  out << "epoch\ttrain_loss";
  for (auto m : ladder.sizes()) out << "\tvalid_ndcg10_m" << m;
  out << "\n";
  out.precision(9);
  for (const auto& r : history) {
    out << r.epoch << "\t" << r.train_loss;
    for (auto v : r.valid_ndcg10) out << "\t" << v;
    out << "\n";
  }
  return out.str();
}

std::vector<TrainExample> training_examples(const SequenceDataset& ds, bool all_positions) {
  std::vector<TrainExample> out;
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    auto tp = ds.train_part(u);
    if (tp.size() < 2) continue;
    if (tp.size() > ds.max_len + 1) tp = tp.last(ds.max_len + 1);
    TrainExample ex;
    ex.inputs.assign(tp.begin(), tp.end() - 1);
    ex.targets.assign(tp.begin() + 1, tp.end());
    if (!all_positions) std::fill(ex.targets.begin(), ex.targets.end() - 1, Index{-1});
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw DataError("no user has a training sequence of length 2 or more");
  return out;
}

void fill_batch(const std::vector<TrainExample>& examples, std::span<const std::size_t> order, SequenceBatch& batch,
                std::vector<Index>& targets) {
  std::size_t longest = 1;
  for (auto i : order) longest = std::max(longest, examples[i].inputs.size());
  batch.batch = order.size();
  batch.length = longest;
  batch.items.assign(order.size() * longest, -1);
  targets.assign(order.size() * longest, -1);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& ex = examples[order[r]];
    const auto off = r * longest + (longest - ex.inputs.size());
    std::copy(ex.inputs.begin(), ex.inputs.end(), batch.items.begin() + static_cast<std::ptrdiff_t>(off));
    std::copy(ex.targets.begin(), ex.targets.end(), targets.begin() + static_cast<std::ptrdiff_t>(off));
  }
}

template <typename T>
ModelParams<T> make_model(const TrainConfig& config, const DatasetBundle& data) {
  const auto mc = config.model_config(data);
  return build_model<T>(mc, to_tensor<T>(data.lang), to_tensor<T>(data.image));
}

template <typename T>
TrainResult<T> train(const TrainConfig& config, const DatasetBundle& data, const TrainHooks& hooks) {
  const auto start = std::chrono::steady_clock::now();
  auto model = make_model<T>(config, data);
  const auto& ds = data.data;
  const auto& ladder = model.config.ladder;
  const auto weights = config.size_weights();
  const auto examples = training_examples(ds, config.all_positions);

  AdamWConfig oc;
  oc.lr = config.learning_rate;
  oc.weight_decay = config.weight_decay;
  oc.clip_norm = config.clip_norm;
  AdamW<T> opt(named_parameters(model), oc);

  EvalOptions eval;
  eval.batch_size = config.eval_batch;
  eval.exclude_seen = config.exclude_seen;

  const auto echo = config.to_key_values();
  TrainResult<T> result;
  EarlyStopping stopper(config.patience);
  std::vector<std::size_t> order(examples.size());
  SequenceBatch batch;
  std::vector<Index> targets;
  std::uint64_t step = 0;
  auto say = [&](const std::string& line) {
    if (hooks.log) *hooks.log << line << std::endl;
  };

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const CounterRng rng(config.seed, kShuffleSite, epoch);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i, i + 1)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    bool diverged = false;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const auto n = std::min(config.batch_size, order.size() - b);
      fill_batch(examples, std::span<const std::size_t>(order).subspan(b, n), batch, targets);
      const ForwardContext ctx{true, config.seed, step++};
      const auto loss = nested_loss_positions(model, batch, targets, ctx, weights);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        result.stop_reason = "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
        diverged = true;
        break;
      }
      opt.zero_grad();
      backward(loss);
      try {
        opt.step();
      } catch (const NumericalError& e) {
        result.stop_reason = e.what();
        diverged = true;
        break;
      }
      loss_sum += value;
      ++batches;
    }
    if (diverged) {
      result.diverged = true;
      say("aborting: " + result.stop_reason);
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, batches));
    const auto valid = evaluate_all(model, ds, Split::valid, eval);
    for (const auto& v : valid) rec.valid_ndcg10.push_back(v.ndcg_at_k(10));
    result.history.push_back(rec);
    result.epochs_run = epoch;
    if (hooks.on_epoch) hooks.on_epoch(rec);

    const bool stop = stopper.update(epoch, rec.valid_ndcg10.back());
    std::ostringstream line;
    line << "epoch " << epoch << " loss " << rec.train_loss << " valid NDCG@10(m=" << ladder.max()
         << ") " << rec.valid_ndcg10.back() << (stopper.improved() ? " *" : "");
    say(line.str());
    if (stopper.improved()) {
      result.checkpoint = model_checkpoint(model);
      save_optimizer(result.checkpoint, opt);
      for (const auto& [k, v] : echo.entries()) result.checkpoint.manifest.set("train." + k, v);
      result.checkpoint.manifest.set("train.best_epoch", std::uint64_t{epoch});
    }
    if (stop) {
      result.stop_reason = "no improvement for " + std::to_string(config.patience) + " epoch(s)";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "reached max_epochs";
  if (stopper.best_epoch() == 0) {
    // Diverged before the first evaluation: keep the initial model.
    result.checkpoint = model_checkpoint(make_model<T>(config, data));
    for (const auto& [k, v] : echo.entries()) result.checkpoint.manifest.set("train." + k, v);
    result.checkpoint.manifest.set("train.best_epoch", std::uint64_t{0});
  }
  result.best_epoch = stopper.best_epoch();
  result.best_metric = std::max(0.0, stopper.best_metric());
  result.model = load_model<T>(result.checkpoint);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

template <typename T>
std::vector<MetricValues> size_curve(const ModelParams<T>& model, const SequenceDataset& ds, Split split,
                                     const EvalOptions& options) {
  std::vector<MetricValues> rows;
  for (auto m : model.config.ladder.sizes()) {
    const auto sub = extract_submodel(model, m);
    rows.push_back(evaluate(sub, ds, split, m, options));
  }
  return rows;
}

std::string format_series(std::span<const std::size_t> sizes, const std::vector<MetricValues>& rows) {
  if (sizes.size() != rows.size() || rows.empty()) throw DimensionError("series: sizes and rows differ");
  std::ostringstream out;
  out.precision(6);
  out.setf(std::ios::fixed);
  const auto& ks = rows.front().ks;
  auto emit = [&](const std::string& name, auto get) {
    out << "# " << name << "\n";
    for (std::size_t j = 0; j < sizes.size(); ++j) out << sizes[j] << "\t" << get(rows[j]) << "\n";
  };
  for (std::size_t i = 0; i < ks.size(); ++i) {
    emit("NDCG@" + std::to_string(ks[i]), [&](const MetricValues& r) { return r.ndcg[i]; });
  }
  for (std::size_t i = 0; i < ks.size(); ++i) {
    emit("Recall@" + std::to_string(ks[i]), [&](const MetricValues& r) { return r.recall[i]; });
  }
  return out.str();
}

#define FMRLREC_INSTANTIATE_TRAINER(T)                                                                     \
  template TrainResult<T> train(const TrainConfig&, const DatasetBundle&, const TrainHooks&);              \
  template ModelParams<T> make_model(const TrainConfig&, const DatasetBundle&);                            \
  template std::vector<MetricValues> size_curve(const ModelParams<T>&, const SequenceDataset&, Split,     \
                                                const EvalOptions&);

FMRLREC_INSTANTIATE_TRAINER(float)
FMRLREC_INSTANTIATE_TRAINER(double)

#undef FMRLREC_INSTANTIATE_TRAINER

}  // namespace fmrlrec
