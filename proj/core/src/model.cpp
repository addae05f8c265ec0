#include "fmrlrec/model.hpp"

#include <cmath>

#include "fmrlrec/error.hpp"

namespace fmrlrec {

std::string to_string(NormMode mode) { return mode == NormMode::segment ? "segment" : "full"; }

std::string to_string(ModalityMode mode) {
  switch (mode) {
    case ModalityMode::both: return "both";
    case ModalityMode::text: return "text";
    case ModalityMode::image: return "image";
    case ModalityMode::none: return "none";
  }
  return "?";
}

NormMode parse_norm_mode(const std::string& text) {
  if (text == "segment") return NormMode::segment;
  if (text == "full") return NormMode::full;
  throw ParameterError("unknown norm mode '" + text + "' (expected segment|full)");
}

ModalityMode parse_modality_mode(const std::string& text) {
  if (text == "both") return ModalityMode::both;
  if (text == "text") return ModalityMode::text;
  if (text == "image") return ModalityMode::image;
  if (text == "none") return ModalityMode::none;
  throw ParameterError("unknown modality mode '" + text + "' (expected both|text|image|none)");
}

std::size_t ModelConfig::fusion_in() const {
  switch (modality_mode) {
    case ModalityMode::both: return lang_dim + image_dim;
    case ModalityMode::text: return lang_dim;
    case ModalityMode::image: return image_dim;
    case ModalityMode::none: return num_items;
  }
  return 0;
}

void ModelConfig::validate() const {
  if (width != ladder.max()) {
    throw ConfigError("model width " + std::to_string(width) + " != ladder maximum " +
                      std::to_string(ladder.max()));
  }
  if (blocks == 0) throw ConfigError("model needs at least one block");
  if (ffn_k == 0) throw ConfigError("ffn_k must be positive");
  if (num_items == 0) throw ConfigError("model needs a non-empty item catalog");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
  if (fusion_in() == 0) throw ConfigError("modality mode " + to_string(modality_mode) + " has no input features");
}

template <typename T>
Tensor<T> fusion_features(const Tensor<T>& lang, const Tensor<T>& image, ModalityMode mode) {
  switch (mode) {
    case ModalityMode::both: {
      if (lang.extent(0) != image.extent(0)) {
        throw DataError("text embeddings have " + std::to_string(lang.extent(0)) + " rows, image embeddings " +
                        std::to_string(image.extent(0)));
      }
      const std::vector<Tensor<T>> parts{lang, image};
      return concat_last<T>(parts);
    }
    case ModalityMode::text: return lang;
    case ModalityMode::image: return image;
    case ModalityMode::none: return {};
  }
  return {};
}

namespace {

template <typename T>
Tensor<T> constant_vector(std::size_t n, T value) {
  return Tensor<T>::full({n}, value, true);
}

template <typename T>
BlockParams<T> make_block(const ModelConfig& c, std::size_t index) {
  const auto D = c.width;
  const auto k = c.ffn_k;
  const std::uint64_t site = 100 + 10 * index;
  BlockParams<T> b;
  b.ln1_alpha = constant_vector<T>(D, T{1});
  b.ln1_beta = constant_vector<T>(D, T{0});
  b.lru = init_ring<T>(D, c.r_min, c.r_max, c.seed, site, c.ladder, c.use_masks, c.input_norm);
  b.ln2_alpha = constant_vector<T>(D, T{1});
  b.ln2_beta = constant_vector<T>(D, T{0});
  const double in_std = 1.0 / std::sqrt(static_cast<double>(D));
  const double out_std = 1.0 / std::sqrt(static_cast<double>(k * D));
  b.ffn_gate = make_masked_linear<T>(D, k * D, LinearCase::up, k, c.ladder, true, c.use_masks, in_std, c.seed, site + 1);
  b.ffn_in = make_masked_linear<T>(D, k * D, LinearCase::up, k, c.ladder, true, c.use_masks, in_std, c.seed, site + 2);
  b.ffn_out = make_masked_linear<T>(k * D, D, LinearCase::down, k, c.ladder, true, c.use_masks, out_std, c.seed, site + 3);
  return b;
}

template <typename T>
std::vector<T> keep_factors(const SequenceBatch& batch) {
  std::vector<T> keep(batch.items.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = batch.items[i] >= 0 ? T{1} : T{0};
  return keep;
}

void check_batch(const SequenceBatch& batch) {
  if (batch.items.size() != batch.batch * batch.length || batch.batch == 0 || batch.length == 0) {
    throw DimensionError("sequence batch " + std::to_string(batch.batch) + "x" + std::to_string(batch.length) +
                         " holds " + std::to_string(batch.items.size()) + " ids");
  }
}

std::vector<double> resolve_weights(std::span<const double> weights, std::size_t count) {
  if (weights.empty()) return std::vector<double>(count, 1.0);
  if (weights.size() != count) {
    throw ParameterError("loss weights: " + std::to_string(weights.size()) + " values for " +
                         std::to_string(count) + " ladder sizes");
  }
  return {weights.begin(), weights.end()};
}

template <typename T>
Tensor<T> accumulate(const Tensor<T>& total, const Tensor<T>& term, double weight) {
  const auto weighted = weight == 1.0 ? term : scale(term, static_cast<T>(weight));
  return total.defined() ? add(total, weighted) : weighted;
}

// CE of the width-m prefix scores on selected rows of `flat_hidden`.
template <typename T>
Tensor<T> prefix_loss(const Tensor<T>& rows, const Tensor<T>& embeddings, std::size_t m,
                      std::span<const Index> labels) {
  const auto logits = matmul_nt(slice_last(rows, 0, m), slice_last(embeddings, 0, m));
  return softmax_cross_entropy(logits, labels);
}

}  // namespace

template <typename T>
ModelParams<T> build_model_from_fusion(const ModelConfig& config, const Tensor<T>& fusion_input) {
  config.validate();
  ModelParams<T> model;
  model.config = config;
  const auto D = config.width;
  if (config.modality_mode == ModalityMode::none) {
    model.item_proj = make_masked_linear<T>(config.num_items, D, LinearCase::output_only, 1, config.ladder,
                                            false, config.use_masks, 1.0 / std::sqrt(static_cast<double>(D)),
                                            config.seed, 1);
  } else {
    if (!fusion_input.defined() || fusion_input.rank() != 2 || fusion_input.extent(0) != config.num_items ||
        fusion_input.extent(1) != config.fusion_in()) {
      throw DataError("item features " + (fusion_input.defined() ? shape_to_string(fusion_input.shape()) : "[]") +
                      " do not match " + std::to_string(config.num_items) + " items x " +
                      std::to_string(config.fusion_in()) + " feature columns");
    }
    model.fusion_input = fusion_input.detach();
    const auto fan_in = static_cast<double>(config.fusion_in());
    model.item_proj = make_masked_linear<T>(config.fusion_in(), D, LinearCase::output_only, 1, config.ladder,
                                            true, config.use_masks, 1.0 / std::sqrt(fan_in), config.seed, 1);
  }
  for (std::size_t i = 0; i < config.blocks; ++i) model.blocks.push_back(make_block<T>(config, i));
  return model;
}

template <typename T>
ModelParams<T> build_model(const ModelConfig& config, const Tensor<T>& lang, const Tensor<T>& image) {
  if (config.modality_mode == ModalityMode::none) return build_model_from_fusion<T>(config, Tensor<T>{});
  return build_model_from_fusion(config, fusion_features(lang, image, config.modality_mode));
}

template <typename T>
std::vector<NamedTensor<T>> named_parameters(const ModelParams<T>& model) {
  std::vector<NamedTensor<T>> out;
  auto linear = [&](const std::string& prefix, const MaskedLinear<T>& l) {
    out.push_back({prefix + ".weight", l.weight});
    if (l.bias.defined()) out.push_back({prefix + ".bias", l.bias});
  };
  linear("item_proj", model.item_proj);
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const auto& b = model.blocks[i];
    const auto p = "blocks." + std::to_string(i);
    out.push_back({p + ".ln1.alpha", b.ln1_alpha});
    out.push_back({p + ".ln1.beta", b.ln1_beta});
    out.push_back({p + ".lru.nu", b.lru.nu});
    out.push_back({p + ".lru.theta", b.lru.theta});
    out.push_back({p + ".lru.gamma_norm", b.lru.gamma_norm});
    linear(p + ".lru.b_re", b.lru.b_re);
    linear(p + ".lru.b_im", b.lru.b_im);
    linear(p + ".lru.c_re", b.lru.c_re);
    linear(p + ".lru.c_im", b.lru.c_im);
    linear(p + ".lru.d_skip", b.lru.d_skip);
    out.push_back({p + ".ln2.alpha", b.ln2_alpha});
    out.push_back({p + ".ln2.beta", b.ln2_beta});
    linear(p + ".ffn_gate", b.ffn_gate);
    linear(p + ".ffn_in", b.ffn_in);
    linear(p + ".ffn_out", b.ffn_out);
  }
  return out;
}

template <typename T>
Tensor<T> fuse_embeddings(const Tensor<T>& lang, const Tensor<T>& image, const MaskedLinear<T>& proj) {
  return linear_forward(fusion_features(lang, image, ModalityMode::both), proj);
}

template <typename T>
Tensor<T> item_embeddings(const ModelParams<T>& model) {
  if (model.config.modality_mode == ModalityMode::none) return fmrlrec_apply(model.item_proj);
  return linear_forward(model.fusion_input, model.item_proj);
}

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockParams<T>& block, const ModelConfig& config,
                        std::size_t block_index, const ForwardContext& ctx, std::span<const T> keep_rows,
                        ForwardTrace<T>* trace) {
  const auto eps = static_cast<T>(config.ln_eps);
  std::vector<std::size_t> segments;
  if (config.norm_mode == NormMode::segment) {
    segments.assign(config.ladder.sizes().begin(), config.ladder.sizes().end());
  }
  auto record = [&](const char* what, const Tensor<T>& v) {
    if (!trace) return;
    trace->names.push_back("block" + std::to_string(block_index) + "." + what);
    trace->values.push_back(v);
  };

  auto z = layer_norm(x, block.ln1_alpha, block.ln1_beta, eps, segments);
  if (!keep_rows.empty()) z = scale_rows(z, keep_rows);
  record("ln1", z);
  auto u = lru_parallel_scan(block.lru, z);
  u = dropout(u, config.dropout, ctx.training, {ctx.seed, 2 * block_index, ctx.step});
  record("lru", u);

  const auto z2 = layer_norm(u, block.ln2_alpha, block.ln2_beta, eps, segments);
  record("ln2", z2);
  const auto gate = silu(linear_forward(z2, block.ffn_gate));
  const auto inner = linear_forward(z2, block.ffn_in);
  const auto gated = dropout(mul(gate, inner), config.dropout, ctx.training, {ctx.seed, 2 * block_index + 1, ctx.step});
  record("ffn_hidden", gated);
  auto out = add(linear_forward(gated, block.ffn_out), u);
  if (!keep_rows.empty()) out = scale_rows(out, keep_rows);
  record("out", out);
  return out;
}

template <typename T>
Encoded<T> encode(const ModelParams<T>& model, const SequenceBatch& batch, const ForwardContext& ctx,
                  const Tensor<T>* embeddings, ForwardTrace<T>* trace) {
  check_batch(batch);
  Encoded<T> enc;
  enc.embeddings = embeddings ? *embeddings : item_embeddings(model);
  if (enc.embeddings.extent(0) != model.config.num_items) {
    throw DimensionError("item table has " + std::to_string(enc.embeddings.extent(0)) + " rows, model expects " +
                         std::to_string(model.config.num_items));
  }
  auto x = gather_rows(enc.embeddings, batch.items, {batch.batch, batch.length});
  if (trace) {
    trace->names.push_back("embed");
    trace->values.push_back(x);
  }
  const auto keep = keep_factors<T>(batch);
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    x = block_forward<T>(x, model.blocks[i], model.config, i, ctx, keep, trace);
  }
  enc.hidden = x;
  return enc;
}

template <typename T>
Tensor<T> last_step(const Tensor<T>& hidden, const SequenceBatch& batch) {
  std::vector<Index> rows(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    if (batch.at(b, batch.length - 1) < 0) {
      throw DataError("sequence " + std::to_string(b) + " in batch is all padding");
    }
    rows[b] = static_cast<Index>(b * batch.length + batch.length - 1);
  }
  const auto D = hidden.extent(-1);
  return gather_rows(reshape(hidden, {batch.batch * batch.length, D}), rows, {batch.batch});
}

template <typename T>
Tensor<T> forward_scores(const ModelParams<T>& model, const SequenceBatch& batch, std::size_t m,
                         const ForwardContext& ctx) {
  model.config.ladder.position(m);
  if (model.config.norm_mode == NormMode::full && m != model.config.width) {
    return forward_scores(slice_model(model, m, false), batch, m, ctx);
  }
  const auto enc = encode(model, batch, ctx);
  const auto z = last_step(enc.hidden, batch);
  return matmul_nt(slice_last(z, 0, m), slice_last(enc.embeddings, 0, m));
}

template <typename T>
std::vector<Tensor<T>> forward_scores_all(const ModelParams<T>& model, const SequenceBatch& batch,
                                          const ForwardContext& ctx) {
  std::vector<Tensor<T>> out;
  const auto& ladder = model.config.ladder;
  if (model.config.norm_mode == NormMode::full) {
    for (auto m : ladder.sizes()) out.push_back(forward_scores(model, batch, m, ctx));
    return out;
  }
  const auto enc = encode(model, batch, ctx);
  const auto z = last_step(enc.hidden, batch);
  for (auto m : ladder.sizes()) out.push_back(matmul_nt(slice_last(z, 0, m), slice_last(enc.embeddings, 0, m)));
  return out;
}

template <typename T>
Tensor<T> nested_loss_positions(const ModelParams<T>& model, const SequenceBatch& batch,
                                std::span<const Index> targets, const ForwardContext& ctx,
                                std::span<const double> size_weights) {
  check_batch(batch);
  if (targets.size() != batch.items.size()) {
    throw DimensionError("targets: " + std::to_string(targets.size()) + " entries for a " +
                         std::to_string(batch.batch) + "x" + std::to_string(batch.length) + " batch");
  }
  std::vector<Index> rows;
  std::vector<Index> labels;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) continue;
    if (static_cast<std::size_t>(targets[i]) >= model.config.num_items) {
      throw IndexError("target item " + std::to_string(targets[i]) + " outside catalog of " +
                       std::to_string(model.config.num_items));
    }
    rows.push_back(static_cast<Index>(i));
    labels.push_back(targets[i]);
  }
  if (rows.empty()) throw DataError("nested loss: batch has no targets");

  const auto& ladder = model.config.ladder;
  const auto weights = resolve_weights(size_weights, ladder.count());
  Tensor<T> total;
  auto selected = [&](const Encoded<T>& enc, std::size_t width) {
    return gather_rows(reshape(enc.hidden, {batch.batch * batch.length, width}), rows, {rows.size()});
  };
  if (model.config.norm_mode == NormMode::segment) {
    // Every layer is prefix-consistent, so one full-width pass carries all sizes.
    const auto enc = encode(model, batch, ctx);
    const auto z = selected(enc, model.config.width);
    for (std::size_t j = 0; j < ladder.count(); ++j) {
      total = accumulate(total, prefix_loss(z, enc.embeddings, ladder[j], labels), weights[j]);
    }
  } else {
    for (std::size_t j = 0; j < ladder.count(); ++j) {
      const auto m = ladder[j];
      const auto sub = m == model.config.width ? model : slice_model(model, m, false);
      const auto enc = encode(sub, batch, ctx);
      total = accumulate(total, prefix_loss(selected(enc, m), enc.embeddings, m, labels), weights[j]);
    }
  }
  return total;
}

template <typename T>
Tensor<T> nested_loss(const ModelParams<T>& model, const SequenceBatch& batch, std::span<const Index> labels,
                      const ForwardContext& ctx, std::span<const double> size_weights) {
  check_batch(batch);
  if (labels.size() != batch.batch) {
    throw DimensionError("nested_loss: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch.batch));
  }
  std::vector<Index> targets(batch.items.size(), -1);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    if (batch.at(b, batch.length - 1) < 0) {
      throw DataError("sequence " + std::to_string(b) + " in batch is all padding");
    }
    targets[b * batch.length + batch.length - 1] = labels[b];
  }
  return nested_loss_positions(model, batch, targets, ctx, size_weights);
}

template <typename T>
ModelParams<T> slice_model(const ModelParams<T>& model, std::size_t m, bool detach) {
  const auto& src = model.config;
  src.ladder.position(m);
  ModelParams<T> out;
  out.config = src;
  out.config.width = m;
  out.config.ladder = src.ladder.prefix_through(m);
  out.config.use_masks = false;
  out.fusion_input = model.fusion_input;
  out.item_proj = slice_linear(model.item_proj, m, detach);
  auto cut = [&](const Tensor<T>& v, std::size_t n) {
    auto s = slice_last(v, 0, n);
    return detach ? s.detach(true) : s;
  };
  for (const auto& b : model.blocks) {
    BlockParams<T> s;
    s.ln1_alpha = cut(b.ln1_alpha, m);
    s.ln1_beta = cut(b.ln1_beta, m);
    s.lru = slice_lru(b.lru, m, detach);
    s.ln2_alpha = cut(b.ln2_alpha, m);
    s.ln2_beta = cut(b.ln2_beta, m);
    s.ffn_gate = slice_linear(b.ffn_gate, m, detach);
    s.ffn_in = slice_linear(b.ffn_in, m, detach);
    s.ffn_out = slice_linear(b.ffn_out, m, detach);
    out.blocks.push_back(std::move(s));
  }
  return out;
}

template <typename T>
ModelParams<T> extract_submodel(const ModelParams<T>& model, std::size_t m) {
  NoGradGuard no_grad;
  return slice_model(model, m, true);
}

template <typename T>
std::size_t parameter_count(const ModelParams<T>& model, bool two_d_only) {
  std::size_t n = 0;
  for (const auto& p : named_parameters(model)) {
    if (two_d_only && p.tensor.rank() != 2) continue;
    n += p.tensor.numel();
  }
  return n;
}

#define FMRLREC_INSTANTIATE_MODEL(T)                                                                     \
  template Tensor<T> fusion_features(const Tensor<T>&, const Tensor<T>&, ModalityMode);                  \
  template ModelParams<T> build_model(const ModelConfig&, const Tensor<T>&, const Tensor<T>&);           \
  template ModelParams<T> build_model_from_fusion(const ModelConfig&, const Tensor<T>&);                 \
  template std::vector<NamedTensor<T>> named_parameters(const ModelParams<T>&);                          \
  template Tensor<T> fuse_embeddings(const Tensor<T>&, const Tensor<T>&, const MaskedLinear<T>&);        \
  template Tensor<T> item_embeddings(const ModelParams<T>&);                                             \
  template Tensor<T> block_forward(const Tensor<T>&, const BlockParams<T>&, const ModelConfig&,          \
                                   std::size_t, const ForwardContext&, std::span<const T>,               \
                                   ForwardTrace<T>*);                                                    \
  template Encoded<T> encode(const ModelParams<T>&, const SequenceBatch&, const ForwardContext&,         \
                             const Tensor<T>*, ForwardTrace<T>*);                                        \
  template Tensor<T> last_step(const Tensor<T>&, const SequenceBatch&);                                  \
  template Tensor<T> forward_scores(const ModelParams<T>&, const SequenceBatch&, std::size_t,            \
                                    const ForwardContext&);                                              \
  template std::vector<Tensor<T>> forward_scores_all(const ModelParams<T>&, const SequenceBatch&,        \
                                                     const ForwardContext&);                             \
  template Tensor<T> nested_loss_positions(const ModelParams<T>&, const SequenceBatch&,                  \
                                           std::span<const Index>, const ForwardContext&,                \
                                           std::span<const double>);                                     \
  template Tensor<T> nested_loss(const ModelParams<T>&, const SequenceBatch&, std::span<const Index>,    \
                                 const ForwardContext&, std::span<const double>);                        \
  template ModelParams<T> slice_model(const ModelParams<T>&, std::size_t, bool);                         \
  template ModelParams<T> extract_submodel(const ModelParams<T>&, std::size_t);                          \
  template std::size_t parameter_count(const ModelParams<T>&, bool);

FMRLREC_INSTANTIATE_MODEL(float)
FMRLREC_INSTANTIATE_MODEL(double)

#undef FMRLREC_INSTANTIATE_MODEL

}  // namespace fmrlrec
