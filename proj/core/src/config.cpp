#include "fmrlrec/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fmrlrec/error.hpp"

namespace fmrlrec {

std::string trim(const std::string& text) {
  const auto* ws = " \t\r\n";
  const auto b = text.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  const auto e = text.find_last_not_of(ws);
  return text.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& what) {
  const auto t = trim(text);
  double v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError(what + ": '" + text + "' is not a number");
  }
  return v;
}

std::int64_t parse_int(const std::string& text, const std::string& what) {
  const auto t = trim(text);
  std::int64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError(what + ": '" + text + "' is not an integer");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& text, const std::string& what) {
  const auto t = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError(what + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(what + ": '" + text + "' is not a boolean");
}

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    }
    const auto key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv.set(key, trim(t.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string KeyValues::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

void KeyValues::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << to_string();
  if (!out) throw DataError("write to '" + path + "' failed");
}

void KeyValues::set(const std::string& key, const std::string& value) {
  if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
    throw ConfigError("key/value '" + key + "' contains a newline or '='");
  }
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KeyValues::set(const std::string& key, double value) { set(key, format_double(value)); }
void KeyValues::set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
void KeyValues::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }

bool KeyValues::contains(const std::string& key) const { return find(key).has_value(); }

std::optional<std::string> KeyValues::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& KeyValues::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw ConfigError(origin_ + ": missing key '" + key + "'");
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto v = find(key);
  return v ? parse_double(*v, origin_ + ": " + key) : fallback;
}

std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) const {
  const auto v = find(key);
  return v ? parse_int(*v, origin_ + ": " + key) : fallback;
}

std::uint64_t KeyValues::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto v = find(key);
  return v ? parse_uint(*v, origin_ + ": " + key) : fallback;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto v = find(key);
  return v ? parse_bool(*v, origin_ + ": " + key) : fallback;
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.entries_) set(k, v);
}

}  // namespace fmrlrec
