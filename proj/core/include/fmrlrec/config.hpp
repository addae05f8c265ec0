#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fmrlrec {

/// Flat key=value text file. Keys keep insertion order so output is stable.
/// Blank lines and lines starting with '#' are ignored on parse.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<text>");
  static KeyValues read_file(const std::string& path);

  std::string to_string() const;
  void write_file(const std::string& path) const;

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

  bool contains(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;
  /// \throws ConfigError if missing.
  const std::string& get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Copies every entry of `other`, overriding existing keys.
  void merge(const KeyValues& other);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string origin_ = "<config>";
};

/// Shortest decimal text that round-trips `value`.
std::string format_double(double value);

double parse_double(const std::string& text, const std::string& what);
std::int64_t parse_int(const std::string& text, const std::string& what);
std::uint64_t parse_uint(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);

std::vector<std::string> split(const std::string& text, char sep);
std::string trim(const std::string& text);

}  // namespace fmrlrec
