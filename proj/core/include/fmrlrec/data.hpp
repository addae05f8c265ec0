#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fmrlrec/config.hpp"
#include "fmrlrec/embedding_file.hpp"
#include "fmrlrec/ops.hpp"

namespace fmrlrec {

struct Interaction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

using InteractionLog = std::vector<Interaction>;

/// Reads tab-separated (user, item, timestamp) lines; ".gz" paths are
/// decompressed. Exact duplicate triples are dropped (first one kept).
InteractionLog read_interactions(const std::string& path);
InteractionLog parse_interactions(const std::string& text, const std::string& origin);
InteractionLog dedupe(const InteractionLog& log);

/// Users and items remaining after each pass of the core filter.
struct FilterTrace {
  struct Round {
    std::size_t users = 0;
    std::size_t items = 0;
    std::size_t interactions = 0;
  };
  std::vector<Round> rounds;
};

/// Repeatedly drops users and items with fewer than `min_count` interactions
/// until nothing changes. Record order is preserved.
/// \throws DataError if nothing survives.
InteractionLog five_core_filter(const InteractionLog& log, std::size_t min_count = 5, FilterTrace* trace = nullptr);

struct ItemMeta {
  std::string title;
  std::string price;
  std::string brand;
  std::string categories;
  std::string image_ref;
};

inline constexpr const char* kTextTemplate = "Title: {title}; Price: {price}; Brand: {brand}; Categories: {categories}";

std::string compose_item_text(const ItemMeta& meta);
/// Inverse of compose_item_text for strings it produced.
ItemMeta parse_item_text(const std::string& text);

/// Line-delimited JSON records with an "item_id" (or "asin") key. Array
/// categories are joined with ", ", nested arrays flattened.
std::map<std::string, ItemMeta> read_metadata(const std::string& path);
std::map<std::string, ItemMeta> parse_metadata(const std::string& text, const std::string& origin);

/// Per-user chronological sequences over a contiguous item index.
struct SequenceDataset {
  std::vector<std::string> item_ids;  ///< index -> raw id (sorted)
  std::map<std::string, Index> item_index;
  std::vector<std::string> user_ids;  ///< sorted
  std::vector<std::vector<Index>> sequences;
  std::size_t max_len = 50;

  std::size_t num_items() const { return item_ids.size(); }
  std::size_t num_users() const { return user_ids.size(); }

  /// s[0:n-2]
  std::span<const Index> train_part(std::size_t user) const;
  Index valid_target(std::size_t user) const;
  Index test_target(std::size_t user) const;
};

/// Groups by user, orders each sequence by timestamp (stable on input order),
/// and reindexes items. \throws DataError if a user has fewer than 3 items.
SequenceDataset build_sequences(const InteractionLog& log, std::size_t max_len = 50);

/// Keeps the most recent min(|s|, length) items and left-pads with -1.
std::vector<Index> pad_truncate(std::span<const Index> s, std::size_t length = 50);

enum class Split { valid, test };
std::string to_string(Split split);
Split parse_split(const std::string& text);

/// Model input and target for one user under the leave-one-out split:
/// valid reads s[0:n-2] and predicts s[n-2]; test reads s[0:n-1] and predicts s[n-1].
std::span<const Index> split_input(const SequenceDataset& ds, std::size_t user, Split split);
Index split_target(const SequenceDataset& ds, std::size_t user, Split split);

/// A dataset directory loaded into memory.
struct DatasetBundle {
  SequenceDataset data;
  std::vector<std::string> item_text;
  std::vector<std::uint8_t> has_image;
  EmbeddingMatrix lang;   ///< rows == |V|; 0 columns if absent
  EmbeddingMatrix image;  ///< rows == |V|; 0 columns if absent
  KeyValues manifest;
};

/// Writes manifest.txt, items.tsv, sequences.tsv, lang.fmrl and img.fmrl.
/// The manifest gains split sizes and embedding checksums.
void save_dataset(const std::string& dir, DatasetBundle& bundle);
DatasetBundle load_dataset(const std::string& dir);

enum class ImagelessPolicy { zero, exclude };

struct PreprocessOptions {
  std::string interactions;  ///< TSV, optionally gzip
  std::string metadata;      ///< JSONL; empty = no metadata filter
  std::string text_embeddings;   ///< TSV "item_id<TAB>v1 v2 ..." keyed by item id; empty = none
  std::string image_embeddings;  ///< same layout; items missing here count as imageless
  bool require_metadata = true;
  ImagelessPolicy imageless = ImagelessPolicy::zero;
  std::size_t min_count = 5;
  std::size_t max_len = 50;
};

DatasetBundle preprocess(const PreprocessOptions& options);

/// Reads an "item_id<TAB>space-separated floats" file.
std::map<std::string, std::vector<float>> read_embedding_table(const std::string& path);

}  // namespace fmrlrec
