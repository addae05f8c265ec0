// fmrlrec: train once, extract every ladder size.
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "fmrlrec/checkpoint.hpp"
#include "fmrlrec/data.hpp"
#include "fmrlrec/error.hpp"
#include "fmrlrec/memory_report.hpp"
#include "fmrlrec/metrics.hpp"
#include "fmrlrec/synth.hpp"
#include "fmrlrec/trainer.hpp"

namespace {

using namespace fmrlrec;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  int precision = 0;  // 0: take from config or checkpoint
  bool deterministic = false;
};

std::string header_line(const std::string& command, const Globals& g) {
  if (g.deterministic) return {};
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return "# fmrlrec " + command + " " + buf + "\n";
}

/// Writes to `path`, or stdout when the path is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

int precision_of(const Globals& g, int fallback) {
  const int p = g.precision ? g.precision : fallback;
  if (p != 32 && p != 64) throw ConfigError("precision must be 32 or 64");
  return p;
}

// ---- preprocess ----------------------------------------------------------

struct PreprocessArgs {
  PreprocessOptions options;
  std::string out;
  std::string imageless = "zero";
  bool keep_without_metadata = false;
};

int run_preprocess(PreprocessArgs& a) {
  a.options.require_metadata = !a.keep_without_metadata;
  if (a.imageless == "zero") a.options.imageless = ImagelessPolicy::zero;
  else if (a.imageless == "exclude") a.options.imageless = ImagelessPolicy::exclude;
  else throw ConfigError("--imageless must be zero or exclude");
  auto bundle = preprocess(a.options);
  save_dataset(a.out, bundle);
  std::cout << "wrote " << a.out << ": " << bundle.data.num_users() << " users, " << bundle.data.num_items()
            << " items\n";
  return kExitOk;
}

// ---- synth ---------------------------------------------------------------

int run_synth(SynthConfig& c, const std::string& out, const Globals& g) {
  if (g.seed_given) c.seed = g.seed;
  auto bundle = synth_generate(c);
  save_dataset(out, bundle);
  std::cout << "wrote " << out << ": " << bundle.data.num_users() << " users, " << bundle.data.num_items()
            << " items\n";
  return kExitOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string history;
  std::vector<std::string> overrides;
  bool quiet = false;
};

template <typename T>
int train_as(const TrainConfig& tc, const DatasetBundle& data, const TrainArgs& a, const Globals& g) {
  TrainHooks hooks;
  if (!a.quiet) hooks.log = &std::cerr;
  auto result = train<T>(tc, data, hooks);
  write_checkpoint(a.out, result.checkpoint);
  if (!a.history.empty()) {
    emit(a.history, header_line("train", g) + format_history(result.history, tc.size_ladder()));
  }
  std::cout << "best epoch " << result.best_epoch << " of " << result.epochs_run << " (" << result.stop_reason
            << "); valid NDCG@10 at m=" << tc.width << ": " << result.best_metric << "\n";
  std::cout << "checkpoint " << a.out << " serves sizes " << tc.size_ladder().to_string() << "\n";
  return result.diverged ? kExitData : kExitOk;
}

int run_train(const TrainArgs& a, const Globals& g) {
  KeyValues kv;
  if (!a.config.empty()) kv = KeyValues::read_file(a.config);
  for (const auto& o : a.overrides) kv.merge(KeyValues::parse(o, "--set"));
  if (g.seed_given) kv.set("seed", g.seed);
  if (g.precision) kv.set("precision", g.precision);
  const auto tc = TrainConfig::from_key_values(kv);
  const auto data = load_dataset(a.data);
  return tc.precision == 64 ? train_as<double>(tc, data, a, g) : train_as<float>(tc, data, a, g);
}

// ---- evaluate / extract / curve -----------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::size_t size = 0;
  std::string split = "test";
  std::string out;
  std::string series;
  bool exclude_seen = false;
  bool baseline = false;
};

template <typename T>
int evaluate_as(const Checkpoint& ckpt, const EvalArgs& a, const Globals& g) {
  const auto model = load_model<T>(ckpt);
  const auto data = load_dataset(a.data);
  EvalOptions opt;
  opt.exclude_seen = a.exclude_seen;
  const auto split = parse_split(a.split);
  const auto m = a.size ? a.size : model.config.width;
  const auto row = evaluate(model, data.data, split, m, opt);
  std::vector<std::size_t> sizes{m};
  std::vector<MetricValues> rows{row};
  if (a.baseline) {
    std::string text = format_metrics_table(sizes, rows);
    text += "popularity baseline\n" + format_metrics_table(sizes, {popularity_baseline(data.data, split, opt)});
    emit(a.out, header_line("evaluate", g) + text);
  } else {
    emit(a.out, header_line("evaluate", g) + format_metrics_table(sizes, rows));
  }
  return kExitOk;
}

template <typename T>
int extract_as(const Checkpoint& ckpt, std::size_t m, const std::string& out) {
  const auto model = load_model<T>(ckpt);
  const auto sub = extract_submodel(model, m);
  auto sub_ckpt = model_checkpoint(sub, m);
  sub_ckpt.manifest.set("source_ladder", model.config.ladder.to_string());
  sub_ckpt.manifest.set("source_width", std::uint64_t{model.config.width});
  write_checkpoint(out, sub_ckpt);
  std::cout << "wrote size-" << m << " model (" << parameter_count(sub, false) << " parameters, "
            << parameter_count(model, false) << " in the source) to " << out << "\n";
  return kExitOk;
}

template <typename T>
int curve_as(const Checkpoint& ckpt, const EvalArgs& a, const Globals& g) {
  const auto model = load_model<T>(ckpt);
  const auto data = load_dataset(a.data);
  EvalOptions opt;
  opt.exclude_seen = a.exclude_seen;
  const auto rows = size_curve(model, data.data, parse_split(a.split), opt);
  const auto sizes = model.config.ladder.sizes();
  emit(a.out, header_line("curve", g) + format_metrics_table(sizes, rows));
  if (!a.series.empty()) emit(a.series, header_line("curve", g) + format_series(sizes, rows));
  return kExitOk;
}

int checkpoint_precision(const Checkpoint& ckpt, const Globals& g) {
  return precision_of(g, static_cast<int>(ckpt.manifest.get_int("precision", 32)));
}

int run_evaluate(const EvalArgs& a, const Globals& g) {
  const auto ckpt = read_checkpoint(a.checkpoint);
  return checkpoint_precision(ckpt, g) == 64 ? evaluate_as<double>(ckpt, a, g) : evaluate_as<float>(ckpt, a, g);
}

int run_extract(const EvalArgs& a, const Globals& g) {
  const auto ckpt = read_checkpoint(a.checkpoint);
  return checkpoint_precision(ckpt, g) == 64 ? extract_as<double>(ckpt, a.size, a.out)
                                              : extract_as<float>(ckpt, a.size, a.out);
}

int run_curve(const EvalArgs& a, const Globals& g) {
  const auto ckpt = read_checkpoint(a.checkpoint);
  return checkpoint_precision(ckpt, g) == 64 ? curve_as<double>(ckpt, a, g) : curve_as<float>(ckpt, a, g);
}

// ---- analyze-memory --------------------------------------------------------

struct MemoryArgs {
  std::size_t layers = 4;
  double gamma = 2;
  std::size_t batch = 32;
  std::size_t length = 50;
  std::string ladder = "2..512";
  std::string out;
};

int run_memory(const MemoryArgs& a, const Globals& g) {
  const auto report = memory_report(a.layers, a.gamma, a.batch, a.length, SizeLadder::parse(a.ladder));
  emit(a.out, header_line("analyze-memory", g) + format_memory_report(report));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fmrlrec: nested-size sequential recommender (train once, extract every size)"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  Globals g;
  app.add_option("--seed", g.seed, "Seed override for synth and train")->each([&](const std::string&) {
    g.seed_given = true;
  });
  app.add_option("--precision", g.precision, "Floating-point precision (32 or 64)")
      ->check(CLI::IsMember({32, 64}));
  app.add_flag("--deterministic", g.deterministic, "Omit the timestamp header line from outputs");

  PreprocessArgs pre;
  auto* cmd_pre = app.add_subcommand("preprocess", "Raw interactions and metadata to a dataset directory");
  cmd_pre->add_option("--interactions", pre.options.interactions, "user<TAB>item<TAB>timestamp file (.gz ok)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_pre->add_option("--metadata", pre.options.metadata, "JSON-lines item metadata")->check(CLI::ExistingFile);
  cmd_pre->add_option("--text-embeddings", pre.options.text_embeddings, "item_id<TAB>values text embeddings")
      ->check(CLI::ExistingFile);
  cmd_pre->add_option("--image-embeddings", pre.options.image_embeddings, "item_id<TAB>values image embeddings")
      ->check(CLI::ExistingFile);
  cmd_pre->add_option("--imageless", pre.imageless, "Items without an image: zero or exclude")
      ->check(CLI::IsMember({"zero", "exclude"}));
  cmd_pre->add_flag("--keep-without-metadata", pre.keep_without_metadata, "Do not drop items lacking metadata");
  cmd_pre->add_option("--min-count", pre.options.min_count, "Core filter threshold")->check(CLI::PositiveNumber);
  cmd_pre->add_option("--max-len", pre.options.max_len, "Model input length")->check(CLI::PositiveNumber);
  cmd_pre->add_option("--out", pre.out, "Output dataset directory")->required();

  SynthConfig sc;
  std::string synth_out;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
  cmd_synth->add_option("--users", sc.users)->check(CLI::PositiveNumber);
  cmd_synth->add_option("--items", sc.items)->check(CLI::Range(10, 1 << 24));
  cmd_synth->add_option("--noise", sc.noise, "Jump probability")->check(CLI::Range(0.0, 1.0));
  cmd_synth->add_option("--popularity-skew", sc.popularity_skew, "Zipf exponent of item popularity (0 = uniform)")
      ->check(CLI::NonNegativeNumber);
  cmd_synth->add_option("--min-length", sc.min_length);
  cmd_synth->add_option("--max-length", sc.max_length);
  cmd_synth->add_option("--text-dim", sc.text_dim);
  cmd_synth->add_option("--image-dim", sc.image_dim);
  cmd_synth->add_option("--max-len", sc.max_len)->check(CLI::PositiveNumber);
  cmd_synth->add_option("--out", synth_out, "Output dataset directory")->required();

  TrainArgs ta;
  auto* cmd_train = app.add_subcommand("train", "Train all ladder sizes in one run");
  cmd_train->add_option("--data", ta.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  cmd_train->add_option("--config", ta.config, "key=value training config")->check(CLI::ExistingFile);
  cmd_train->add_option("--set", ta.overrides, "Override a config key (key=value), repeatable");
  cmd_train->add_option("--out", ta.out, "Checkpoint path")->required();
  cmd_train->add_option("--history", ta.history, "Per-epoch history file");
  cmd_train->add_flag("--quiet", ta.quiet, "No per-epoch log on stderr");

  EvalArgs ea;
  auto* cmd_eval = app.add_subcommand("evaluate", "Metrics of one size on a split");
  cmd_eval->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  cmd_eval->add_option("--data", ea.data)->required()->check(CLI::ExistingDirectory);
  cmd_eval->add_option("--size", ea.size, "Ladder size (default: model width)");
  cmd_eval->add_option("--split", ea.split)->check(CLI::IsMember({"valid", "test"}));
  cmd_eval->add_option("--out", ea.out, "Table file (default stdout)");
  cmd_eval->add_flag("--exclude-seen", ea.exclude_seen, "Do not rank items already in the input");
  cmd_eval->add_flag("--baseline", ea.baseline, "Also print the popularity baseline");

  EvalArgs xa;
  auto* cmd_extract = app.add_subcommand("extract", "Write a standalone checkpoint for one size");
  cmd_extract->add_option("--checkpoint", xa.checkpoint)->required()->check(CLI::ExistingFile);
  cmd_extract->add_option("--size", xa.size)->required();
  cmd_extract->add_option("--out", xa.out)->required();

  EvalArgs ca;
  auto* cmd_curve = app.add_subcommand("curve", "Extract and evaluate every ladder size");
  cmd_curve->add_option("--checkpoint", ca.checkpoint)->required()->check(CLI::ExistingFile);
  cmd_curve->add_option("--data", ca.data)->required()->check(CLI::ExistingDirectory);
  cmd_curve->add_option("--split", ca.split)->check(CLI::IsMember({"valid", "test"}));
  cmd_curve->add_option("--out", ca.out, "Table file (default stdout)");
  cmd_curve->add_option("--series", ca.series, "Plot-ready size/value series file");
  cmd_curve->add_flag("--exclude-seen", ca.exclude_seen);

  MemoryArgs ma;
  auto* cmd_mem = app.add_subcommand("analyze-memory", "Parameter and activation savings of nested training");
  cmd_mem->add_option("--layers", ma.layers)->check(CLI::PositiveNumber);
  cmd_mem->add_option("--gamma", ma.gamma)->check(CLI::PositiveNumber);
  cmd_mem->add_option("--batch", ma.batch)->check(CLI::PositiveNumber);
  cmd_mem->add_option("--len", ma.length)->check(CLI::PositiveNumber);
  cmd_mem->add_option("--ladder", ma.ladder, "e.g. 2..512 or 128,256,512");
  cmd_mem->add_option("--out", ma.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*cmd_pre) return run_preprocess(pre);
    if (*cmd_synth) return run_synth(sc, synth_out, g);
    if (*cmd_train) return run_train(ta, g);
    if (*cmd_eval) return run_evaluate(ea, g);
    if (*cmd_extract) return run_extract(xa, g);
    if (*cmd_curve) return run_curve(ca, g);
    if (*cmd_mem) return run_memory(ma, g);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
