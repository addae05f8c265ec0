#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "fmrlrec/error.hpp"

namespace fmrlrec::binary {

/// Sum of all bytes modulo 2^64.
inline std::uint64_t byte_sum(std::span<const std::uint8_t> bytes) {
  std::uint64_t s = 0;
  for (auto b : bytes) s += b;
  return s;
}

class Writer {
 public:
  template <typename U>
  void put(U value) {
    static_assert(std::is_arithmetic_v<U>);
    std::uint8_t raw[sizeof(U)];
    std::memcpy(raw, &value, sizeof(U));
    // Host is little-endian on every supported target; reverse otherwise.
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(U));
  }

  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }

  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }

  template <typename U>
  void put_array(std::span<const U> values) {
    if constexpr (std::endian::native == std::endian::little) {
      put_bytes(values.data(), values.size_bytes());
    } else {
      for (auto v : values) put(v);
    }
  }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint8_t raw[sizeof(U)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, raw, sizeof(U));
    return value;
  }

  std::string get_string(std::size_t max_len = 1u << 20) {
    const auto n = get<std::uint32_t>();
    if (n > max_len) throw FormatError(origin_ + ": string length " + std::to_string(n) + " is implausible");
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  template <typename U>
  std::vector<U> get_array(std::size_t count) {
    if (count > (bytes_.size() - pos_) / sizeof(U)) {
      throw FormatError(origin_ + ": truncated array of " + std::to_string(count) + " elements at offset " +
                        std::to_string(pos_));
    }
    std::vector<U> out(count);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(U));
      pos_ += count * sizeof(U);
    } else {
      for (auto& v : out) v = get<U>();
    }
    return out;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& origin() const { return origin_; }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) {
      throw FormatError(origin_ + ": unexpected end of data at offset " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " more bytes)");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace fmrlrec::binary
