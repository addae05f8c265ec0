#include <gtest/gtest.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "fmrlrec/binary_io.hpp"
#include "fmrlrec/data.hpp"
#include "fmrlrec/error.hpp"
#include "fmrlrec/synth.hpp"
#include "oracles.hpp"

using namespace fmrlrec;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = fs::temp_directory_path() / ("fmrlrec_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

InteractionLog from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
  InteractionLog log;
  std::int64_t t = 0;
  for (const auto& [u, i] : pairs) log.push_back({u, i, t++});
  return log;
}

std::vector<std::pair<std::string, std::string>> to_pairs(const InteractionLog& log) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& r : log) out.emplace_back(r.user, r.item);
  return out;
}

void expect_core(const InteractionLog& log, std::size_t k) {
  std::map<std::string, std::size_t> users, items;
  for (const auto& r : log) {
    ++users[r.user];
    ++items[r.item];
  }
  for (const auto& [u, n] : users) EXPECT_GE(n, k) << u;
  for (const auto& [i, n] : items) EXPECT_GE(n, k) << i;
}

// c1..c5 x A..E is a stable core. F has four buyers, so it goes first; that
// leaves x and y1..y3 with four items, and losing x drops G to four.
std::vector<std::pair<std::string, std::string>> cascade_fixture() {
  std::vector<std::pair<std::string, std::string>> p;
  for (const char* u : {"c1", "c2", "c3", "c4", "c5"})
    for (const char* i : {"A", "B", "C", "D", "E"}) p.emplace_back(u, i);
  for (const char* i : {"A", "B", "C", "F", "G"}) p.emplace_back("x", i);
  for (const char* u : {"c1", "c2", "c3", "c4"}) p.emplace_back(u, "G");
  for (const char* u : {"y1", "y2", "y3"})
    for (const char* i : {"A", "B", "C", "D", "F"}) p.emplace_back(u, i);
  return p;
}

}  // namespace

TEST(FiveCore, SatisfiedLogIsUnchanged) {
  std::vector<std::pair<std::string, std::string>> p;
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 6; ++i) p.emplace_back("u" + std::to_string(u), "i" + std::to_string(i));
  const auto log = from_pairs(p);
  FilterTrace trace;
  EXPECT_EQ(five_core_filter(log, 5, &trace), log);
  EXPECT_EQ(trace.rounds.size(), 1u);
}

TEST(FiveCore, CascadeReachesOracleFixedPoint) {
  const auto fixture = cascade_fixture();
  FilterTrace trace;
  const auto out = five_core_filter(from_pairs(fixture), 5, &trace);
  const auto expected = oracle::k_core(fixture, 5);
  EXPECT_EQ(to_pairs(out), expected);
  EXPECT_EQ(out.size(), 25u);
  expect_core(out, 5);
  EXPECT_GE(trace.rounds.size(), 3u);
  std::set<std::string> items;
  for (const auto& r : out) items.insert(r.item);
  EXPECT_EQ(items, (std::set<std::string>{"A", "B", "C", "D", "E"}));
}

TEST(FiveCore, RandomLogsMatchOracle) {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 60; ++rep) {
    std::uniform_int_distribution<int> user(0, 14), item(0, 11);
    std::vector<std::pair<std::string, std::string>> p;
    std::set<std::pair<int, int>> seen;
    for (int n = 0; n < 110; ++n) {
      const int u = user(gen), i = item(gen);
      if (seen.insert({u, i}).second) p.emplace_back("u" + std::to_string(u), "i" + std::to_string(i));
    }
    const auto expected = oracle::k_core(p, 5);
    if (expected.empty()) {
      EXPECT_THROW(five_core_filter(from_pairs(p)), DataError);
      continue;
    }
    const auto out = five_core_filter(from_pairs(p));
    EXPECT_EQ(to_pairs(out), expected);
    expect_core(out, 5);
  }
}

TEST(FiveCore, EmptyResultReportsCounts) {
  const auto log = from_pairs({{"u", "a"}, {"u", "b"}, {"v", "a"}});
  try {
    five_core_filter(log);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("2 users"), std::string::npos) << e.what();
  }
}

TEST(ItemText, Template) {
  EXPECT_EQ(compose_item_text({}), "Title: ; Price: ; Brand: ; Categories: ");
  const ItemMeta m{"Crème \xE6\x97\xA5\xE6\x9C\xAC \xF0\x9F\x92\x84", "$12.50", "Acme", "Beauty, Skin", ""};
  const auto text = compose_item_text(m);
  EXPECT_EQ(text, "Title: Crème \xE6\x97\xA5\xE6\x9C\xAC \xF0\x9F\x92\x84; Price: $12.50; Brand: Acme; Categories: Beauty, Skin");
  const auto back = parse_item_text(text);
  EXPECT_EQ(back.title, m.title);
  EXPECT_EQ(back.price, m.price);
  EXPECT_EQ(back.brand, m.brand);
  EXPECT_EQ(back.categories, m.categories);
  EXPECT_THROW(parse_item_text("Name: x"), DataError);
}

TEST(Metadata, ParsesJsonLines) {
  const auto meta = parse_metadata(
      "{\"asin\": \"B1\", \"title\": \"Soap\", \"price\": 3.5, \"brand\": \"Co\", "
      "\"categories\": [[\"Beauty\", \"Bath\"], [\"Gift\"]], \"imUrl\": \"http://x/1.jpg\"}\n"
      "{\"item_id\": \"B2\", \"title\": \"\"}\n",
      "meta");
  ASSERT_EQ(meta.size(), 2u);
  EXPECT_EQ(meta.at("B1").title, "Soap");
  EXPECT_EQ(meta.at("B1").categories, "Beauty, Bath, Gift");
  EXPECT_EQ(meta.at("B1").image_ref, "http://x/1.jpg");
  EXPECT_FALSE(meta.at("B1").price.empty());
  EXPECT_THROW(parse_metadata("{not json", "meta"), DataError);
  EXPECT_THROW(parse_metadata("{\"title\": \"x\"}", "meta"), DataError);
}

TEST(Embeddings, RoundTripIsBitwise) {
  TempDir dir("emb");
  EmbeddingMatrix m{3, 2, {1.5f, -0.0f, 3.25e-20f, 7.0f, -1e30f, 0.1f}};
  write_embeddings(dir.file("a.fmrl"), m);
  const auto back = read_embeddings(dir.file("a.fmrl"));
  EXPECT_EQ(back.rows, 3u);
  EXPECT_EQ(back.cols, 2u);
  EXPECT_EQ(std::memcmp(back.values.data(), m.values.data(), 6 * sizeof(float)), 0);
  write_embeddings(dir.file("b.fmrl"), back);
  EXPECT_EQ(read_bytes(dir.file("a.fmrl")), read_bytes(dir.file("b.fmrl")));
}

TEST(Embeddings, LayoutAndChecksum) {
  const EmbeddingMatrix m{1, 2, {1.0f, 2.0f}};
  const auto bytes = encode_embeddings(m);
  ASSERT_EQ(bytes.size(), 4u + 12u + 8u + 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FMRL");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[8], 1);  // rows
  EXPECT_EQ(bytes[12], 2);  // cols
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i + 8 < bytes.size(); ++i) sum += bytes[i];
  std::uint64_t stored = 0;
  for (int i = 7; i >= 0; --i) stored = (stored << 8) | bytes[bytes.size() - 8 + std::size_t(i)];
  EXPECT_EQ(stored, sum);
  EXPECT_EQ(embedding_checksum(m), sum);
}

TEST(Embeddings, Errors) {
  TempDir dir("emb_err");
  const EmbeddingMatrix m{4, 3, std::vector<float>(12, 0.5f)};
  write_embeddings(dir.file("e.fmrl"), m);
  try {
    load_embeddings(dir.file("e.fmrl"), 5);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find('5'), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find('4'), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_embeddings(dir.file("e.fmrl"), 4, 8), FormatError);
  EXPECT_NO_THROW(load_embeddings(dir.file("e.fmrl"), 4, 3));

  auto bytes = encode_embeddings(m);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_embeddings(bad_magic, "x"), FormatError);
  auto bad_sum = bytes;
  bad_sum[20] ^= 1;
  EXPECT_THROW(decode_embeddings(bad_sum, "x"), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(decode_embeddings(bad_version, "x"), FormatError);
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + 20);
  EXPECT_THROW(decode_embeddings(truncated, "x"), FormatError);
}

TEST(Interactions, ParseDedupeAndErrors) {
  const auto log = dedupe(parse_interactions("u1\ta\t3\nu1\ta\t3\nu1\tb\t3\n", "t"));
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[1].item, "b");
  EXPECT_THROW(parse_interactions("u1\ta\n", "t"), DataError);
  EXPECT_THROW(parse_interactions("u1\ta\tnoon\n", "t"), DataError);
}

TEST(Interactions, GzipMatchesPlain) {
  TempDir dir("gz");
  std::string text;
  for (int i = 0; i < 300; ++i) text += "user" + std::to_string(i % 17) + "\titem" + std::to_string(i % 23) + "\t" + std::to_string(i) + "\n";
  write_text(dir.file("log.tsv"), text);
  gzFile gz = gzopen(dir.file("log.tsv.gz").c_str(), "wb");
  gzwrite(gz, text.data(), static_cast<unsigned>(text.size()));
  gzclose(gz);
  EXPECT_EQ(read_interactions(dir.file("log.tsv")), read_interactions(dir.file("log.tsv.gz")));
  EXPECT_THROW(read_interactions(dir.file("missing.tsv")), DataError);
}

TEST(Sequences, ChronologicalWithStableTies) {
  const InteractionLog log{{"u", "c", 30}, {"u", "a", 10}, {"u", "z", 20}, {"u", "b", 20}, {"v", "a", 1},
                           {"v", "b", 2},  {"v", "c", 3}};
  const auto ds = build_sequences(log);
  ASSERT_EQ(ds.user_ids, (std::vector<std::string>{"u", "v"}));
  std::vector<std::string> order;
  for (auto i : ds.sequences[0]) order.push_back(ds.item_ids[std::size_t(i)]);
  EXPECT_EQ(order, (std::vector<std::string>{"a", "z", "b", "c"}));
  EXPECT_THROW(build_sequences({{"u", "a", 1}, {"u", "b", 2}}), DataError);
}

TEST(Sequences, LeaveOneOutReconstructs) {
  SynthConfig c;
  c.users = 50;
  c.items = 40;
  const auto b = synth_generate(c);
  for (std::size_t u = 0; u < b.data.num_users(); ++u) {
    const auto& s = b.data.sequences[u];
    std::vector<Index> rebuilt(b.data.train_part(u).begin(), b.data.train_part(u).end());
    rebuilt.push_back(b.data.valid_target(u));
    rebuilt.push_back(b.data.test_target(u));
    EXPECT_EQ(rebuilt, s);
    EXPECT_EQ(b.data.test_target(u), s.back());
    const auto vin = split_input(b.data, u, Split::valid);
    const auto tin = split_input(b.data, u, Split::test);
    EXPECT_EQ(vin.size(), s.size() - 2);
    EXPECT_EQ(tin.size(), s.size() - 1);
    EXPECT_EQ(split_target(b.data, u, Split::valid), s[s.size() - 2]);
    EXPECT_EQ(split_target(b.data, u, Split::test), s.back());
  }
}

TEST(Sequences, PadTruncate) {
  const std::vector<Index> s{1, 2, 3};
  EXPECT_EQ(pad_truncate(s, 5), (std::vector<Index>{-1, -1, 1, 2, 3}));
  std::vector<Index> long_s(80);
  for (std::size_t i = 0; i < 80; ++i) long_s[i] = Index(i);
  const auto p = pad_truncate(long_s);
  ASSERT_EQ(p.size(), 50u);
  EXPECT_EQ(p.front(), 30);
  EXPECT_EQ(p.back(), 79);
  EXPECT_EQ(pad_truncate(std::vector<Index>{}, 3), (std::vector<Index>{-1, -1, -1}));
}

TEST(Sequences, CatalogIsBijection) {
  const auto b = synth_generate(SynthConfig{.users = 100, .items = 60});
  ASSERT_EQ(b.data.item_index.size(), b.data.num_items());
  for (std::size_t i = 0; i < b.data.num_items(); ++i)
    EXPECT_EQ(b.data.item_index.at(b.data.item_ids[i]), Index(i));
  for (const auto& [id, i] : b.data.item_index) EXPECT_EQ(b.data.item_ids[std::size_t(i)], id);
}

TEST(Synth, DeterministicBytes) {
  TempDir a("synth_a"), b("synth_b"), c("synth_c");
  SynthConfig cfg;
  cfg.users = 120;
  cfg.items = 50;
  cfg.seed = 42;
  auto x = synth_generate(cfg), y = synth_generate(cfg);
  save_dataset(a.str(), x);
  save_dataset(b.str(), y);
  for (const char* f : {"manifest.txt", "items.tsv", "sequences.tsv", "lang.fmrl", "img.fmrl"})
    EXPECT_EQ(read_bytes(a.file(f)), read_bytes(b.file(f))) << f;
  cfg.seed = 43;
  auto z = synth_generate(cfg);
  save_dataset(c.str(), z);
  EXPECT_NE(read_bytes(a.file("sequences.tsv")), read_bytes(c.file("sequences.tsv")));
}

TEST(Synth, NoiseControlsTransitions) {
  for (double noise : {0.0, 0.2}) {
    SynthConfig cfg;
    cfg.users = 400;
    cfg.items = 80;
    cfg.noise = noise;
    const auto b = synth_generate(cfg);
    const auto pos = synth_cycle_positions(cfg);
    std::size_t steps = 0, successor = 0;
    for (const auto& s : b.data.sequences)
      for (std::size_t t = 1; t < s.size(); ++t) {
        ++steps;
        successor += pos[std::size_t(s[t])] == (pos[std::size_t(s[t - 1])] + 1) % cfg.items;
      }
    const double frac = double(successor) / double(steps);
    if (noise == 0.0) EXPECT_EQ(frac, 1.0);
    else EXPECT_NEAR(frac, 0.8 + 0.2 / 80.0, 0.02);
  }
}

TEST(Synth, ShapesAndLengths) {
  SynthConfig cfg;
  cfg.users = 200;
  cfg.items = 30;
  const auto b = synth_generate(cfg);
  EXPECT_EQ(b.data.num_users(), 200u);
  EXPECT_EQ(b.lang.rows, b.data.num_items());
  EXPECT_EQ(b.lang.cols, cfg.text_dim);
  EXPECT_EQ(b.image.cols, cfg.image_dim);
  for (const auto& s : b.data.sequences) {
    EXPECT_GE(s.size(), cfg.min_length);
    EXPECT_LE(s.size(), cfg.max_length);
  }
  SynthConfig bad;
  bad.items = 5;
  EXPECT_THROW(synth_generate(bad), ParameterError);
  bad.items = 50;
  bad.noise = 1.5;
  EXPECT_THROW(synth_generate(bad), ParameterError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir("ds");
  SynthConfig cfg;
  cfg.users = 60;
  cfg.items = 30;
  auto b = synth_generate(cfg);
  save_dataset(dir.str(), b);
  const auto back = load_dataset(dir.str());
  EXPECT_EQ(back.data.sequences, b.data.sequences);
  EXPECT_EQ(back.data.item_ids, b.data.item_ids);
  EXPECT_EQ(back.data.user_ids, b.data.user_ids);
  EXPECT_EQ(back.item_text, b.item_text);
  EXPECT_EQ(back.lang.values, b.lang.values);
  EXPECT_EQ(back.image.values, b.image.values);
  EXPECT_EQ(back.manifest.get_string("text_template", ""), kTextTemplate);
  // Corrupt one embedding file: the manifest checksum no longer matches.
  auto bytes = read_bytes(dir.file("lang.fmrl"));
  bytes[30] ^= 0x40;
  write_text(dir.file("lang.fmrl"), bytes);
  EXPECT_THROW(load_dataset(dir.str()), FormatError);
}

class Preprocess : public ::testing::Test {
 protected:
  TempDir dir{"pre"};
  PreprocessOptions options;

  void SetUp() override {
    std::string log, meta, text, image;
    // Six users over items i0..i6; i6 lacks a title, i5 lacks an image.
    for (int u = 0; u < 6; ++u)
      for (int i = 0; i < 7; ++i)
        log += "u" + std::to_string(u) + "\ti" + std::to_string(i) + "\t" + std::to_string(100 * i + u) + "\n";
    for (int i = 0; i < 7; ++i) {
      const std::string title = i == 6 ? "" : "Item " + std::to_string(i);
      meta += "{\"item_id\": \"i" + std::to_string(i) + "\", \"title\": \"" + title +
              "\", \"price\": \"1\", \"brand\": \"B\", \"categories\": [\"C\"]}\n";
      text += "i" + std::to_string(i) + "\t" + std::to_string(i) + " 0.5 -1\n";
      if (i != 5) image += "i" + std::to_string(i) + "\t" + std::to_string(-i) + " 2\n";
    }
    write_text(dir.file("log.tsv"), log);
    write_text(dir.file("meta.jsonl"), meta);
    write_text(dir.file("text.tsv"), text);
    write_text(dir.file("image.tsv"), image);
    options.interactions = dir.file("log.tsv");
    options.metadata = dir.file("meta.jsonl");
    options.text_embeddings = dir.file("text.tsv");
    options.image_embeddings = dir.file("image.tsv");
  }
};

TEST_F(Preprocess, FiltersAndZeroFillsImages) {
  const auto b = preprocess(options);
  EXPECT_EQ(b.data.num_items(), 6u);
  EXPECT_EQ(b.data.item_index.count("i6"), 0u);
  EXPECT_EQ(b.manifest.get_uint("dropped.items_without_metadata", 0), 1u);
  const auto i5 = std::size_t(b.data.item_index.at("i5"));
  EXPECT_EQ(b.has_image[i5], 0);
  EXPECT_EQ(b.image.at(i5, 0), 0.0f);
  EXPECT_EQ(b.image.at(i5, 1), 0.0f);
  EXPECT_EQ(b.lang.at(i5, 0), 5.0f);
  EXPECT_EQ(b.item_text[0], "Title: Item 0; Price: 1; Brand: B; Categories: C");
}

TEST_F(Preprocess, ExcludePolicyDropsImageless) {
  options.imageless = ImagelessPolicy::exclude;
  const auto b = preprocess(options);
  EXPECT_EQ(b.data.num_items(), 5u);
  EXPECT_EQ(b.manifest.get_string("imageless_policy", ""), "exclude");
}

TEST_F(Preprocess, RepeatedRunsAreByteIdentical) {
  auto a = preprocess(options), b = preprocess(options);
  save_dataset(dir.file("out_a"), a);
  save_dataset(dir.file("out_b"), b);
  for (const char* f : {"manifest.txt", "items.tsv", "sequences.tsv", "lang.fmrl", "img.fmrl"})
    EXPECT_EQ(read_bytes(dir.file("out_a/") + f), read_bytes(dir.file("out_b/") + f)) << f;
}
