#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmrlrec/tensor.hpp"

namespace fmrlrec {

/// Row-major float32 matrix, the in-memory form of an embedding file.
///
/// File layout (little-endian): "FMRL", u32 version, u32 rows, u32 cols,
/// rows*cols f32 values, u64 checksum = sum of all preceding bytes mod 2^64.
struct EmbeddingMatrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m);
/// \throws FormatError on bad magic, version, size or checksum.
EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes, const std::string& origin);

void write_embeddings(const std::string& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_embeddings(const std::string& path);

/// Reads and validates the shape against the catalog. `expected_cols` of 0
/// accepts any width. \throws FormatError naming expected and found values.
EmbeddingMatrix load_embeddings(const std::string& path, std::size_t expected_rows, std::size_t expected_cols = 0);

/// Checksum stored in the trailer of an encoded file.
std::uint64_t embedding_checksum(const EmbeddingMatrix& m);

template <typename T>
Tensor<T> to_tensor(const EmbeddingMatrix& m);

}  // namespace fmrlrec
