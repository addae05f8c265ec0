#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmrlrec/config.hpp"
#include "fmrlrec/model.hpp"
#include "fmrlrec/optimizer.hpp"

namespace fmrlrec {

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u64 = 3 };

/// Named array stored as raw little-endian bytes.
struct Blob {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<std::uint8_t> bytes;

  template <typename T>
  static Blob from_values(std::string name, Shape shape, std::span<const T> values);

  /// Values converted to T; accepts f32 and f64 blobs for floating T.
  template <typename T>
  std::vector<T> values() const;
};

/// Binary checkpoint (little-endian):
///   "FMRC", u32 version, u32 manifest length, manifest text,
///   u32 blob count, blobs (u32-prefixed name, u8 dtype, u32 rank,
///   u64 extents, u64 byte length, bytes), u64 sum of all preceding bytes.
struct Checkpoint {
  KeyValues manifest;
  std::vector<Blob> blobs;

  const Blob* find(const std::string& name) const;
  /// \throws FormatError if absent.
  const Blob& get(const std::string& name) const;
  void put(Blob blob);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

void write_model_config(KeyValues& out, const ModelConfig& config);
ModelConfig read_model_config(const KeyValues& in);

/// Manifest (config, precision, ladder, extracted_size) plus parameter blobs
/// and the fusion input buffer. `extracted_size` of 0 marks a full model.
template <typename T>
Checkpoint model_checkpoint(const ModelParams<T>& model, std::size_t extracted_size = 0);

/// Rebuilds a model in precision T (converting blobs if needed) and rebuilds
/// masks from the stored ladder.
template <typename T>
ModelParams<T> load_model(const Checkpoint& ckpt);

template <typename T>
void save_optimizer(Checkpoint& ckpt, AdamW<T>& opt);
/// \throws FormatError if the stored state does not match the parameters.
template <typename T>
void load_optimizer(const Checkpoint& ckpt, AdamW<T>& opt);

}  // namespace fmrlrec
