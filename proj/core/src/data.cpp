#include "fmrlrec/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "fmrlrec/error.hpp"
#include "json.hpp"

namespace fmrlrec {

namespace {

std::string read_maybe_gzip(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open '" + path + "'");
  std::string out;
  char buf[1 << 16];
  while (true) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(f, &code);
      gzclose(f);
      throw DataError("'" + path + "': decompression failed: " + msg);
    }
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  gzclose(f);
  return out;
}

std::string escape_field(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    const char c = s[++i];
    out += c == 't' ? '\t' : c == 'n' ? '\n' : c == 'r' ? '\r' : c;
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

std::string json_text(const nlohmann::json& v) {
  if (v.is_null()) return {};
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

void flatten_strings(const nlohmann::json& v, std::vector<std::string>& out) {
  if (v.is_array()) {
    for (const auto& e : v) flatten_strings(e, out);
  } else if (!v.is_null()) {
    const auto s = json_text(v);
    if (!s.empty()) out.push_back(s);
  }
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

InteractionLog parse_interactions(const std::string& text, const std::string& origin) {
  InteractionLog log;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], '\t');
    if (f.size() < 3) {
      throw DataError(origin + ":" + std::to_string(i + 1) + ": expected user<TAB>item<TAB>timestamp, got " +
                      std::to_string(f.size()) + " field(s)");
    }
    Interaction r;
    r.user = f[0];
    r.item = f[1];
    if (r.user.empty() || r.item.empty()) {
      throw DataError(origin + ":" + std::to_string(i + 1) + ": empty user or item id");
    }
    try {
      r.timestamp = parse_int(f[2], "timestamp");
    } catch (const ConfigError&) {
      throw DataError(origin + ":" + std::to_string(i + 1) + ": timestamp '" + f[2] + "' is not an integer");
    }
    log.push_back(std::move(r));
  }
  return log;
}

InteractionLog read_interactions(const std::string& path) {
  return dedupe(parse_interactions(read_maybe_gzip(path), path));
}

InteractionLog dedupe(const InteractionLog& log) {
  std::set<std::tuple<std::string, std::string, std::int64_t>> seen;
  InteractionLog out;
  for (const auto& r : log) {
    if (seen.emplace(r.user, r.item, r.timestamp).second) out.push_back(r);
  }
  return out;
}

InteractionLog five_core_filter(const InteractionLog& log, std::size_t min_count, FilterTrace* trace) {
  InteractionLog cur = log;
  std::vector<FilterTrace::Round> rounds;
  while (true) {
    std::unordered_map<std::string, std::size_t> users, items;
    for (const auto& r : cur) {
      ++users[r.user];
      ++items[r.item];
    }
    rounds.push_back({users.size(), items.size(), cur.size()});
    InteractionLog next;
    next.reserve(cur.size());
    for (const auto& r : cur) {
      if (users[r.user] >= min_count && items[r.item] >= min_count) next.push_back(r);
    }
    if (next.size() == cur.size()) break;
    cur = std::move(next);
  }
  if (trace) trace->rounds = rounds;
  if (cur.empty()) {
    std::string detail;
    for (std::size_t i = 0; i < rounds.size(); ++i) {
      detail += " [pass " + std::to_string(i) + ": " + std::to_string(rounds[i].users) + " users, " +
                std::to_string(rounds[i].items) + " items, " + std::to_string(rounds[i].interactions) +
                " interactions]";
    }
    throw DataError(std::to_string(min_count) + "-core filter left no interactions;" + detail);
  }
  return cur;
}

std::string compose_item_text(const ItemMeta& meta) {
  return "Title: " + meta.title + "; Price: " + meta.price + "; Brand: " + meta.brand +
         "; Categories: " + meta.categories;
}

ItemMeta parse_item_text(const std::string& text) {
  static const char* keys[] = {"Title: ", "; Price: ", "; Brand: ", "; Categories: "};
  std::size_t pos[4];
  std::size_t from = 0;
  for (int i = 0; i < 4; ++i) {
    pos[i] = text.find(keys[i], from);
    if (pos[i] == std::string::npos || (i == 0 && pos[0] != 0)) {
      throw DataError("item text does not follow the template: '" + text + "'");
    }
    from = pos[i] + std::char_traits<char>::length(keys[i]);
  }
  auto field = [&](int i) {
    const auto b = pos[i] + std::char_traits<char>::length(keys[i]);
    const auto e = i == 3 ? text.size() : pos[i + 1];
    return text.substr(b, e - b);
  };
  return {field(0), field(1), field(2), field(3), {}};
}

std::map<std::string, ItemMeta> parse_metadata(const std::string& text, const std::string& origin) {
  std::map<std::string, ItemMeta> out;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(origin + ":" + std::to_string(i + 1) + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(origin + ":" + std::to_string(i + 1) + ": expected a JSON object");
    std::string id;
    if (j.contains("item_id")) id = json_text(j["item_id"]);
    else if (j.contains("asin")) id = json_text(j["asin"]);
    if (id.empty()) throw DataError(origin + ":" + std::to_string(i + 1) + ": record has no item_id");
    ItemMeta m;
    if (j.contains("title")) m.title = json_text(j["title"]);
    if (j.contains("price")) m.price = json_text(j["price"]);
    if (j.contains("brand")) m.brand = json_text(j["brand"]);
    if (j.contains("categories")) {
      std::vector<std::string> cats;
      flatten_strings(j["categories"], cats);
      m.categories = join(cats, ", ");
    }
    for (const char* key : {"image_ref", "imUrl", "image"}) {
      if (!j.contains(key)) continue;
      std::vector<std::string> refs;
      flatten_strings(j[key], refs);
      if (!refs.empty()) {
        m.image_ref = refs.front();
        break;
      }
    }
    out[id] = std::move(m);
  }
  return out;
}

std::map<std::string, ItemMeta> read_metadata(const std::string& path) {
  return parse_metadata(read_maybe_gzip(path), path);
}

std::span<const Index> SequenceDataset::train_part(std::size_t user) const {
  const auto& s = sequences.at(user);
  return std::span<const Index>(s).first(s.size() - 2);
}

Index SequenceDataset::valid_target(std::size_t user) const {
  const auto& s = sequences.at(user);
  return s[s.size() - 2];
}

Index SequenceDataset::test_target(std::size_t user) const { return sequences.at(user).back(); }

SequenceDataset build_sequences(const InteractionLog& log, std::size_t max_len) {
  SequenceDataset ds;
  ds.max_len = max_len;
  std::set<std::string> items;
  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < log.size(); ++i) {
    items.insert(log[i].item);
    by_user[log[i].user].push_back(i);
  }
  for (const auto& id : items) {
    ds.item_index.emplace(id, static_cast<Index>(ds.item_ids.size()));
    ds.item_ids.push_back(id);
  }
  for (auto& [user, rows] : by_user) {
    if (rows.size() < 3) {
      throw DataError("user '" + user + "' has " + std::to_string(rows.size()) +
                      " interaction(s); a train/valid/test split needs at least 3");
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t a, std::size_t b) { return log[a].timestamp < log[b].timestamp; });
    std::vector<Index> seq;
    seq.reserve(rows.size());
    for (auto r : rows) seq.push_back(ds.item_index.at(log[r].item));
    ds.user_ids.push_back(user);
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

std::vector<Index> pad_truncate(std::span<const Index> s, std::size_t length) {
  std::vector<Index> out(length, -1);
  const auto keep = std::min(s.size(), length);
  std::copy(s.end() - static_cast<std::ptrdiff_t>(keep), s.end(), out.end() - static_cast<std::ptrdiff_t>(keep));
  return out;
}

std::string to_string(Split split) { return split == Split::valid ? "valid" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "valid") return Split::valid;
  if (text == "test") return Split::test;
  throw ParameterError("unknown split '" + text + "' (expected valid|test)");
}

std::span<const Index> split_input(const SequenceDataset& ds, std::size_t user, Split split) {
  const auto& s = ds.sequences.at(user);
  return std::span<const Index>(s).first(s.size() - (split == Split::valid ? 2 : 1));
}

Index split_target(const SequenceDataset& ds, std::size_t user, Split split) {
  return split == Split::valid ? ds.valid_target(user) : ds.test_target(user);
}

void save_dataset(const std::string& dir, DatasetBundle& b) {
  namespace fs = std::filesystem;
  const auto& ds = b.data;
  const auto V = ds.num_items();
  if (b.item_text.size() != V || b.has_image.size() != V) {
    throw DimensionError("dataset bundle: item_text/has_image must have one entry per item");
  }
  if ((b.lang.cols && b.lang.rows != V) || (b.image.cols && b.image.rows != V)) {
    throw DimensionError("dataset bundle: embedding rows must equal the catalog size");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());

  std::ostringstream items;
  for (std::size_t i = 0; i < V; ++i) {
    items << i << '\t' << escape_field(ds.item_ids[i]) << '\t' << int(b.has_image[i]) << '\t'
          << escape_field(b.item_text[i]) << '\n';
  }
  std::ostringstream seqs;
  std::size_t interactions = 0, train = 0;
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    seqs << escape_field(ds.user_ids[u]) << '\t';
    for (std::size_t t = 0; t < ds.sequences[u].size(); ++t) seqs << (t ? " " : "") << ds.sequences[u][t];
    seqs << '\n';
    interactions += ds.sequences[u].size();
    train += ds.sequences[u].size() - 2;
  }

  auto& m = b.manifest;
  m.set("format", "fmrlrec-dataset");
  m.set("version", std::uint64_t{1});
  m.set("users", std::uint64_t{ds.num_users()});
  m.set("items", std::uint64_t{V});
  m.set("interactions", std::uint64_t{interactions});
  m.set("split.train_interactions", std::uint64_t{train});
  m.set("split.valid_targets", std::uint64_t{ds.num_users()});
  m.set("split.test_targets", std::uint64_t{ds.num_users()});
  m.set("max_len", std::uint64_t{ds.max_len});
  m.set("text_template", kTextTemplate);
  m.set("lang_dim", std::uint64_t{b.lang.cols});
  m.set("image_dim", std::uint64_t{b.image.cols});
  m.set("images_present", std::uint64_t(std::count(b.has_image.begin(), b.has_image.end(), 1)));

  const std::string base = dir + "/";
  {
    std::ofstream f(base + "items.tsv", std::ios::binary | std::ios::trunc);
    f << items.str();
    std::ofstream g(base + "sequences.tsv", std::ios::binary | std::ios::trunc);
    g << seqs.str();
    if (!f || !g) throw DataError("writing dataset files under '" + dir + "' failed");
  }
  if (b.lang.cols) {
    write_embeddings(base + "lang.fmrl", b.lang);
    m.set("lang_checksum", embedding_checksum(b.lang));
  }
  if (b.image.cols) {
    write_embeddings(base + "img.fmrl", b.image);
    m.set("image_checksum", embedding_checksum(b.image));
  }
  m.write_file(base + "manifest.txt");
}

DatasetBundle load_dataset(const std::string& dir) {
  const std::string base = dir + "/";
  DatasetBundle b;
  b.manifest = KeyValues::read_file(base + "manifest.txt");
  const auto& m = b.manifest;
  if (m.get_string("format", "") != "fmrlrec-dataset") {
    throw FormatError(base + "manifest.txt: not a dataset manifest (format key missing or wrong)");
  }
  auto& ds = b.data;
  ds.max_len = m.get_uint("max_len", 50);

  const auto item_lines = lines_of(read_maybe_gzip(base + "items.tsv"));
  for (std::size_t i = 0; i < item_lines.size(); ++i) {
    if (item_lines[i].empty()) continue;
    const auto f = split(item_lines[i], '\t');
    if (f.size() != 4 || parse_uint(f[0], "item index") != ds.item_ids.size()) {
      throw FormatError(base + "items.tsv:" + std::to_string(i + 1) + ": malformed item row");
    }
    const auto id = unescape_field(f[1]);
    ds.item_index.emplace(id, static_cast<Index>(ds.item_ids.size()));
    ds.item_ids.push_back(id);
    b.has_image.push_back(f[2] == "1" ? 1 : 0);
    b.item_text.push_back(unescape_field(f[3]));
  }
  const auto V = ds.num_items();
  if (V != m.get_uint("items", 0)) {
    throw FormatError(base + "items.tsv: " + std::to_string(V) + " items, manifest says " + m.get("items"));
  }

  const auto seq_lines = lines_of(read_maybe_gzip(base + "sequences.tsv"));
  for (std::size_t i = 0; i < seq_lines.size(); ++i) {
    if (seq_lines[i].empty()) continue;
    const auto f = split(seq_lines[i], '\t');
    if (f.size() != 2) throw FormatError(base + "sequences.tsv:" + std::to_string(i + 1) + ": malformed row");
    std::vector<Index> seq;
    for (const auto& tok : split(f[1], ' ')) {
      const auto v = parse_uint(tok, "item index");
      if (v >= V) {
        throw FormatError(base + "sequences.tsv:" + std::to_string(i + 1) + ": item index " + tok +
                          " outside catalog of " + std::to_string(V));
      }
      seq.push_back(static_cast<Index>(v));
    }
    if (seq.size() < 3) {
      throw FormatError(base + "sequences.tsv:" + std::to_string(i + 1) + ": sequence shorter than 3");
    }
    ds.user_ids.push_back(unescape_field(f[0]));
    ds.sequences.push_back(std::move(seq));
  }
  if (ds.num_users() != m.get_uint("users", 0)) {
    throw FormatError(base + "sequences.tsv: " + std::to_string(ds.num_users()) + " users, manifest says " +
                      m.get("users"));
  }

  auto load = [&](const char* file, const char* dim_key, const char* sum_key, EmbeddingMatrix& out) {
    const auto dim = m.get_uint(dim_key, 0);
    if (dim == 0) {
      out.rows = static_cast<std::uint32_t>(V);
      return;
    }
    out = load_embeddings(base + file, V, dim);
    const auto sum = embedding_checksum(out);
    if (m.contains(sum_key) && m.get_uint(sum_key, 0) != sum) {
      throw FormatError(base + file + ": checksum " + std::to_string(sum) + " differs from manifest " +
                        m.get(sum_key));
    }
  };
  load("lang.fmrl", "lang_dim", "lang_checksum", b.lang);
  load("img.fmrl", "image_dim", "image_checksum", b.image);
  return b;
}

std::map<std::string, std::vector<float>> read_embedding_table(const std::string& path) {
  std::map<std::string, std::vector<float>> out;
  const auto lines = lines_of(read_maybe_gzip(path));
  std::size_t width = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": expected item_id<TAB>values");
    }
    std::vector<float> row;
    std::istringstream vals(lines[i].substr(tab + 1));
    std::string tok;
    while (vals >> tok) {
      try {
        row.push_back(static_cast<float>(parse_double(tok, "embedding value")));
      } catch (const ConfigError& e) {
        throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
      }
    }
    if (row.empty() || (width && row.size() != width)) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": row has " + std::to_string(row.size()) +
                      " values, expected " + std::to_string(width ? width : 1) + (width ? "" : "+"));
    }
    width = row.size();
    out[lines[i].substr(0, tab)] = std::move(row);
  }
  if (out.empty()) throw DataError(path + ": no embedding rows");
  return out;
}

DatasetBundle preprocess(const PreprocessOptions& opt) {
  KeyValues manifest;
  auto log = read_interactions(opt.interactions);
  manifest.set("raw.interactions", std::uint64_t{log.size()});

  std::map<std::string, ItemMeta> meta;
  if (!opt.metadata.empty()) meta = read_metadata(opt.metadata);
  std::map<std::string, std::vector<float>> text_emb, image_emb;
  if (!opt.text_embeddings.empty()) text_emb = read_embedding_table(opt.text_embeddings);
  if (!opt.image_embeddings.empty()) image_emb = read_embedding_table(opt.image_embeddings);

  auto drop_items = [&](const char* key, auto keep) {
    InteractionLog next;
    std::set<std::string> dropped;
    for (const auto& r : log) {
      if (keep(r.item)) next.push_back(r);
      else dropped.insert(r.item);
    }
    manifest.set(key, std::uint64_t{dropped.size()});
    log = std::move(next);
  };
  if (!opt.metadata.empty() && opt.require_metadata) {
    drop_items("dropped.items_without_metadata", [&](const std::string& id) {
      const auto it = meta.find(id);
      return it != meta.end() && !it->second.title.empty();
    });
  }
  if (!text_emb.empty()) {
    drop_items("dropped.items_without_text_embedding", [&](const std::string& id) { return text_emb.count(id) > 0; });
  }
  if (!image_emb.empty() && opt.imageless == ImagelessPolicy::exclude) {
    drop_items("dropped.items_without_image", [&](const std::string& id) { return image_emb.count(id) > 0; });
  }

  FilterTrace trace;
  log = five_core_filter(log, opt.min_count, &trace);
  for (std::size_t i = 0; i < trace.rounds.size(); ++i) {
    const auto& r = trace.rounds[i];
    manifest.set("filter.pass" + std::to_string(i),
                 std::to_string(r.users) + " users, " + std::to_string(r.items) + " items, " +
                     std::to_string(r.interactions) + " interactions");
  }
  manifest.set("filter.min_count", std::uint64_t{opt.min_count});
  manifest.set("imageless_policy", opt.imageless == ImagelessPolicy::zero ? "zero" : "exclude");

  DatasetBundle b;
  b.data = build_sequences(log, opt.max_len);
  const auto V = b.data.num_items();
  b.has_image.assign(V, 0);
  for (std::size_t i = 0; i < V; ++i) {
    const auto& id = b.data.item_ids[i];
    const auto it = meta.find(id);
    b.item_text.push_back(compose_item_text(it == meta.end() ? ItemMeta{} : it->second));
  }
  auto fill = [&](const std::map<std::string, std::vector<float>>& table, EmbeddingMatrix& out, bool image) {
    out.rows = static_cast<std::uint32_t>(V);
    if (table.empty()) return;
    out.cols = static_cast<std::uint32_t>(table.begin()->second.size());
    out.values.assign(std::size_t{out.rows} * out.cols, 0.0f);
    for (std::size_t i = 0; i < V; ++i) {
      const auto it = table.find(b.data.item_ids[i]);
      if (it == table.end()) continue;
      std::copy(it->second.begin(), it->second.end(), out.values.begin() + static_cast<std::ptrdiff_t>(i * out.cols));
      if (image) b.has_image[i] = 1;
    }
  };
  fill(text_emb, b.lang, false);
  fill(image_emb, b.image, true);
  b.manifest = std::move(manifest);
  return b;
}

}  // namespace fmrlrec
