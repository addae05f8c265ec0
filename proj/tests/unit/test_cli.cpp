#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(FMRLREC_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// One tiny dataset and checkpoint shared by the whole suite.
class Cli : public ::testing::Test {
 protected:
  static inline fs::path dir;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("fmrlrec_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::copy(FMRLREC_TEST_DATA "/tiny", dir / "data");
    const auto start = std::chrono::steady_clock::now();
    const auto train = run("--deterministic train --quiet --data " + (dir / "data").string() + " --config " +
                           FMRLREC_TEST_DATA "/tiny.conf --out " + (dir / "model.ckpt").string() + " --history " +
                           (dir / "history.tsv").string());
    train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ASSERT_EQ(train.code, 0) << train.out;
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }

  static inline double train_seconds = 0;
  static std::string path(const std::string& name) { return (dir / name).string(); }
};

}  // namespace

TEST_F(Cli, TinyTrainingIsQuickAndWritesCheckpoint) {
  EXPECT_LT(train_seconds, 120.0);
  EXPECT_TRUE(fs::exists(path("model.ckpt")));
  const auto history = read_bytes(path("history.tsv"));
  EXPECT_NE(history.find("epoch"), std::string::npos);
  EXPECT_EQ(history.find("# fmrlrec"), std::string::npos);
}

TEST_F(Cli, AnalyzeMemoryWorkedExample) {
  const auto r = run("--deterministic analyze-memory --layers 4 --gamma 2 --batch 32 --len 50 --ladder 2..512");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("weights_saved             699040"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("activations_saved         2.1845e+06"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("ratio_R                   1.33333"), std::string::npos) << r.out;
}

TEST_F(Cli, ExtractThenEvaluateEqualsEvaluateSize) {
  ASSERT_EQ(run("extract --checkpoint " + path("model.ckpt") + " --size 8 --out " + path("m8.ckpt")).code, 0);
  const auto direct = run("--deterministic evaluate --checkpoint " + path("model.ckpt") + " --data " + path("data") +
                          " --size 8");
  const auto extracted =
      run("--deterministic evaluate --checkpoint " + path("m8.ckpt") + " --data " + path("data"));
  ASSERT_EQ(direct.code, 0);
  ASSERT_EQ(extracted.code, 0);
  EXPECT_FALSE(direct.out.empty());
  EXPECT_EQ(direct.out, extracted.out);
}

TEST_F(Cli, CurveWritesTableAndSeries) {
  const auto r = run("--deterministic curve --checkpoint " + path("model.ckpt") + " --data " + path("data") +
                     " --series " + path("series.tsv"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Recall@10"), std::string::npos);
  const auto series = read_bytes(path("series.tsv"));
  EXPECT_NE(series.find("# NDCG@10"), std::string::npos);
  EXPECT_NE(series.find("16\t"), std::string::npos);
}

TEST_F(Cli, DeterministicRunsAreByteIdentical) {
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(run("--deterministic synth --users 80 --items 30 --out " + path(std::string("s_") + name)).code, 0);
    ASSERT_EQ(run("--deterministic train --quiet --data " + path("data") + " --config " FMRLREC_TEST_DATA
                  "/tiny.conf --set max_epochs=1 --out " + path(std::string("t_") + name + ".ckpt") +
                  " --history " + path(std::string("h_") + name + ".tsv"))
                  .code,
              0);
  }
  for (const char* f : {"manifest.txt", "items.tsv", "sequences.tsv", "lang.fmrl", "img.fmrl"})
    EXPECT_EQ(read_bytes(dir / "s_a" / f), read_bytes(dir / "s_b" / f)) << f;
  EXPECT_EQ(read_bytes(path("t_a.ckpt")), read_bytes(path("t_b.ckpt")));
  EXPECT_EQ(read_bytes(path("h_a.tsv")), read_bytes(path("h_b.tsv")));
}

TEST_F(Cli, TimestampHeaderUnlessDeterministic) {
  const auto r = run("analyze-memory");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("# fmrlrec analyze-memory ", 0), 0u);
}

TEST_F(Cli, InputsAreNotMutated) {
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(dir / "data")) before[e.path().string()] = read_bytes(e.path());
  const auto ckpt = read_bytes(path("model.ckpt"));
  run("--deterministic evaluate --checkpoint " + path("model.ckpt") + " --data " + path("data"));
  run("--deterministic curve --checkpoint " + path("model.ckpt") + " --data " + path("data"));
  run("extract --checkpoint " + path("model.ckpt") + " --size 16 --out " + path("m16.ckpt"));
  for (const auto& [p, bytes] : before) EXPECT_EQ(read_bytes(p), bytes) << p;
  EXPECT_EQ(read_bytes(path("model.ckpt")), ckpt);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("synth --users 10 --bogus 1 --out " + path("x")).code, 1);
  EXPECT_EQ(run("train --data " + path("data") + " --set no_such_key=1 --out " + path("x.ckpt")).code, 1);
  EXPECT_EQ(run("analyze-memory --ladder 3,6").code, 1);
  EXPECT_EQ(run("extract --checkpoint " + path("model.ckpt") + " --size 12 --out " + path("x.ckpt")).code, 1);
  // Data and format errors.
  std::ofstream(path("garbage.ckpt")) << "not a checkpoint";
  EXPECT_EQ(run("evaluate --checkpoint " + path("garbage.ckpt") + " --data " + path("data")).code, 2);
  fs::create_directories(path("empty"));
  EXPECT_EQ(run("evaluate --checkpoint " + path("model.ckpt") + " --data " + path("empty")).code, 2);
  EXPECT_EQ(run("--help").code, 0);
}
