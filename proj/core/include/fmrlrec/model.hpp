/** \file model.hpp
 *  \brief Multimodal LRU recommender with nested widths.
 *
 * Item features (text, image) are fused by a linear projection into an item
 * table E [|V|, D]; sequences of item ids are looked up in E, run through N
 * blocks (LayerNorm -> LRU, then a gated FFN sublayer with residual), and the
 * last time step is scored against E itself. Every 2-D weight carries a
 * padding mask so that width m is served by the [0:m] prefix of every layer.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fmrlrec/lru.hpp"
#include "fmrlrec/matryoshka.hpp"
#include "fmrlrec/ops.hpp"

namespace fmrlrec {

enum class NormMode { segment, full };
enum class ModalityMode { both, text, image, none };

std::string to_string(NormMode mode);
std::string to_string(ModalityMode mode);
NormMode parse_norm_mode(const std::string& text);
ModalityMode parse_modality_mode(const std::string& text);

struct ModelConfig {
  std::size_t width = 64;  ///< D, equal to ladder.max()
  SizeLadder ladder = SizeLadder::doubling(8, 64);
  std::size_t blocks = 2;
  std::size_t ffn_k = 2;
  NormMode norm_mode = NormMode::segment;
  ModalityMode modality_mode = ModalityMode::both;
  double r_min = 0.0;
  double r_max = 0.1;
  bool input_norm = true;
  bool use_masks = true;
  double dropout = 0.1;
  double ln_eps = 1e-5;
  std::uint64_t seed = 0;
  std::size_t num_items = 0;
  std::size_t lang_dim = 0;
  std::size_t image_dim = 0;

  /// Input width of the fusion projection for the configured modality mode.
  std::size_t fusion_in() const;
  void validate() const;
};

template <typename T>
struct BlockParams {
  Tensor<T> ln1_alpha, ln1_beta;
  LruParams<T> lru;
  Tensor<T> ln2_alpha, ln2_beta;
  MaskedLinear<T> ffn_gate;  ///< up, with bias
  MaskedLinear<T> ffn_in;    ///< up, with bias
  MaskedLinear<T> ffn_out;   ///< down, with bias
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  /// Fusion projection [fusion_in, D] with bias, or in `none` mode the learned
  /// item table [|V|, D] without bias. Either way output_only.
  MaskedLinear<T> item_proj;
  /// Constant fusion input [|V|, fusion_in] (concatenated modality features).
  Tensor<T> fusion_input;
  std::vector<BlockParams<T>> blocks;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Concatenation of the selected modalities; empty tensor in `none` mode.
template <typename T>
Tensor<T> fusion_features(const Tensor<T>& lang, const Tensor<T>& image, ModalityMode mode);

template <typename T>
ModelParams<T> build_model(const ModelConfig& config, const Tensor<T>& lang, const Tensor<T>& image);

/// Same, from already concatenated features (undefined tensor in `none` mode).
template <typename T>
ModelParams<T> build_model_from_fusion(const ModelConfig& config, const Tensor<T>& fusion_input);

/// Trainable tensors in a stable order with dotted names.
template <typename T>
std::vector<NamedTensor<T>> named_parameters(const ModelParams<T>& model);

/// E = concat(lang, image) W_proj + b_proj.
template <typename T>
Tensor<T> fuse_embeddings(const Tensor<T>& lang, const Tensor<T>& image, const MaskedLinear<T>& proj);

/// Item table E [|V|, D] used for lookup and for scoring.
template <typename T>
Tensor<T> item_embeddings(const ModelParams<T>& model);

struct ForwardContext {
  bool training = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// Left-padded id matrix; pad entries are negative and read a zero embedding.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<Index> items;  ///< [batch * length]

  Index at(std::size_t b, std::size_t t) const { return items[b * length + t]; }
};

/// Per-layer activations collected by `encode` when requested.
template <typename T>
struct ForwardTrace {
  std::vector<std::string> names;
  std::vector<Tensor<T>> values;
};

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockParams<T>& block, const ModelConfig& config,
                        std::size_t block_index, const ForwardContext& ctx,
                        std::span<const T> keep_rows, ForwardTrace<T>* trace = nullptr);

template <typename T>
struct Encoded {
  Tensor<T> hidden;      ///< [B, L, D]
  Tensor<T> embeddings;  ///< [|V|, D]
};

/// Runs lookup and all blocks at the model's own width. Pass `embeddings` to
/// reuse a precomputed item table.
template <typename T>
Encoded<T> encode(const ModelParams<T>& model, const SequenceBatch& batch, const ForwardContext& ctx,
                  const Tensor<T>* embeddings = nullptr, ForwardTrace<T>* trace = nullptr);

/// Last-step hidden states [B, D]. \throws DataError for an all-padding row.
template <typename T>
Tensor<T> last_step(const Tensor<T>& hidden, const SequenceBatch& batch);

/// Relevance scores [B, |V|] of the width-m submodel. In segment mode this is
/// the prefix of the full pass; in full mode the model is sliced first.
template <typename T>
Tensor<T> forward_scores(const ModelParams<T>& model, const SequenceBatch& batch, std::size_t m,
                         const ForwardContext& ctx);

/// Scores for every ladder width from one pass (segment mode) or one pass per
/// width (full mode). Entry j belongs to ladder[j].
template <typename T>
std::vector<Tensor<T>> forward_scores_all(const ModelParams<T>& model, const SequenceBatch& batch,
                                          const ForwardContext& ctx);

/// Sum over ladder widths of weights[j] * CE(scores_m, labels) on last-step targets.
template <typename T>
Tensor<T> nested_loss(const ModelParams<T>& model, const SequenceBatch& batch,
                      std::span<const Index> labels, const ForwardContext& ctx,
                      std::span<const double> size_weights = {});

/// Same objective applied at every position with targets[b * L + t] >= 0.
template <typename T>
Tensor<T> nested_loss_positions(const ModelParams<T>& model, const SequenceBatch& batch,
                                std::span<const Index> targets, const ForwardContext& ctx,
                                std::span<const double> size_weights = {});

/// Width-m view of the model. With `detach` the result is a standalone model
/// (no masks, fresh leaves); otherwise slices stay on the tape.
template <typename T>
ModelParams<T> slice_model(const ModelParams<T>& model, std::size_t m, bool detach);

/// Standalone submodel of width m. \throws ParameterError if m is not in the ladder.
template <typename T>
ModelParams<T> extract_submodel(const ModelParams<T>& model, std::size_t m);

/// Count of scalar parameters in 2-D weights only (`two_d_only`) or in all tensors.
template <typename T>
std::size_t parameter_count(const ModelParams<T>& model, bool two_d_only);

}  // namespace fmrlrec
