#include "fmrlrec/embedding_file.hpp"

#include <fstream>
#include <iterator>

#include "fmrlrec/binary_io.hpp"
#include "fmrlrec/error.hpp"

namespace fmrlrec {

namespace binary {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace binary

namespace {
constexpr char kMagic[4] = {'F', 'M', 'R', 'L'};
}

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m) {
  if (m.values.size() != std::size_t{m.rows} * m.cols) {
    throw DimensionError("embedding matrix " + std::to_string(m.rows) + "x" + std::to_string(m.cols) + " holds " +
                         std::to_string(m.values.size()) + " values");
  }
  binary::Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kEmbeddingFormatVersion);
  w.put<std::uint32_t>(m.rows);
  w.put<std::uint32_t>(m.cols);
  w.put_array<float>(m.values);
  w.put<std::uint64_t>(binary::byte_sum(w.bytes()));
  return std::move(w.bytes());
}

EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.size() < 4 + 12 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(origin + ": not an embedding file (expected magic 'FMRL')");
  }
  binary::Reader r(bytes, origin);
  r.get<std::uint32_t>();
  const auto version = r.get<std::uint32_t>();
  if (version != kEmbeddingFormatVersion) {
    throw FormatError(origin + ": format version " + std::to_string(version) + ", expected " +
                      std::to_string(kEmbeddingFormatVersion));
  }
  EmbeddingMatrix m;
  m.rows = r.get<std::uint32_t>();
  m.cols = r.get<std::uint32_t>();
  const std::size_t count = std::size_t{m.rows} * m.cols;
  if (r.remaining() != count * sizeof(float) + 8) {
    throw FormatError(origin + ": header says " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                      " but payload has " + std::to_string(r.remaining()) + " bytes (expected " +
                      std::to_string(count * sizeof(float) + 8) + ")");
  }
  m.values = r.get_array<float>(count);
  const auto expected = binary::byte_sum(bytes.first(r.position()));
  const auto stored = r.get<std::uint64_t>();
  if (stored != expected) {
    throw FormatError(origin + ": checksum mismatch (stored " + std::to_string(stored) + ", computed " +
                      std::to_string(expected) + ")");
  }
  return m;
}

void write_embeddings(const std::string& path, const EmbeddingMatrix& m) {
  binary::write_file(path, encode_embeddings(m));
}

EmbeddingMatrix read_embeddings(const std::string& path) {
  const auto bytes = binary::read_file(path);
  return decode_embeddings(bytes, path);
}

EmbeddingMatrix load_embeddings(const std::string& path, std::size_t expected_rows, std::size_t expected_cols) {
  auto m = read_embeddings(path);
  if (m.rows != expected_rows) {
    throw FormatError(path + ": expected " + std::to_string(expected_rows) + " rows (catalog size), found " +
                      std::to_string(m.rows));
  }
  if (expected_cols != 0 && m.cols != expected_cols) {
    throw FormatError(path + ": expected " + std::to_string(expected_cols) + " columns, found " +
                      std::to_string(m.cols));
  }
  return m;
}

std::uint64_t embedding_checksum(const EmbeddingMatrix& m) {
  const auto bytes = encode_embeddings(m);
  std::uint64_t v = 0;
  std::memcpy(&v, bytes.data() + bytes.size() - 8, 8);
  return v;
}

template <typename T>
Tensor<T> to_tensor(const EmbeddingMatrix& m) {
  std::vector<T> data(m.values.begin(), m.values.end());
  return Tensor<T>::from_vector({m.rows, m.cols}, std::move(data));
}

template Tensor<float> to_tensor(const EmbeddingMatrix&);
template Tensor<double> to_tensor(const EmbeddingMatrix&);

}  // namespace fmrlrec
