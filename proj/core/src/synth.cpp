#include "fmrlrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fmrlrec/error.hpp"
#include "fmrlrec/rng.hpp"

namespace fmrlrec {

namespace {

constexpr std::uint64_t kPermSite = 1;
constexpr std::uint64_t kWalkSite = 2;
constexpr std::uint64_t kTextSite = 3;
constexpr std::uint64_t kImageSite = 4;
constexpr std::uint64_t kRankSite = 5;

// Cumulative Zipf weights over a seeded random ranking of cycle positions.
struct PositionSampler {
  std::vector<double> cdf;
  std::vector<std::size_t> position_of_rank;

  std::size_t draw(double u) const {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back());
    const auto r = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    return position_of_rank[r];
  }
};

PositionSampler make_sampler(std::size_t n, double skew, std::uint64_t seed) {
  PositionSampler s;
  s.position_of_rank.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.position_of_rank[i] = i;
  const CounterRng rng(seed, kRankSite, 0);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(s.position_of_rank[i], s.position_of_rank[rng.below(i, i + 1)]);
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    acc += std::pow(static_cast<double>(r + 1), -skew);
    s.cdf.push_back(acc);
  }
  return s;
}

void check(const SynthConfig& c) {
  if (c.items < 10) throw ParameterError("synth: need at least 10 items, got " + std::to_string(c.items));
  if (c.users == 0) throw ParameterError("synth: need at least one user");
  if (!(c.noise >= 0.0 && c.noise <= 1.0)) throw ParameterError("synth: noise must be in [0, 1]");
  if (!(c.popularity_skew >= 0.0)) throw ParameterError("synth: popularity_skew must be non-negative");
  if (c.min_length < 3 || c.max_length < c.min_length) {
    throw ParameterError("synth: sequence lengths need 3 <= min_length <= max_length");
  }
  if (c.text_dim == 0 && c.image_dim == 0) throw ParameterError("synth: no feature dimensions");
}

std::string numbered(const char* prefix, std::size_t i, int width) {
  auto digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

int digits(std::size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

EmbeddingMatrix project(const std::vector<double>& features, std::size_t n, std::size_t f, std::size_t dim,
                        double noise, std::uint64_t seed, std::uint64_t site) {
  EmbeddingMatrix m;
  m.rows = static_cast<std::uint32_t>(n);
  m.cols = static_cast<std::uint32_t>(dim);
  m.values.assign(n * dim, 0.0f);
  if (dim == 0) return m;
  const CounterRng wrng(seed, site, 0);
  const CounterRng nrng(seed, site, 1);
  const double wscale = 1.0 / std::sqrt(static_cast<double>(f));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < dim; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < f; ++k) acc += features[i * f + k] * wrng.normal(k * dim + c) * wscale;
      acc += noise * nrng.normal(i * dim + c);
      m.values[i * dim + c] = static_cast<float>(acc);
    }
  }
  return m;
}

}  // namespace

std::vector<std::size_t> synth_cycle_positions(const SynthConfig& c) {
  check(c);
  std::vector<std::size_t> item_at(c.items);
  for (std::size_t i = 0; i < c.items; ++i) item_at[i] = i;
  const CounterRng rng(c.seed, kPermSite, 0);
  for (std::size_t i = c.items - 1; i > 0; --i) std::swap(item_at[i], item_at[rng.below(i, i + 1)]);
  std::vector<std::size_t> pos_of(c.items);
  for (std::size_t p = 0; p < c.items; ++p) pos_of[item_at[p]] = p;
  return pos_of;
}

DatasetBundle synth_generate(const SynthConfig& c) {
  check(c);
  const auto n = c.items;
  const auto pos_of = synth_cycle_positions(c);
  std::vector<std::size_t> item_at(n);
  for (std::size_t i = 0; i < n; ++i) item_at[pos_of[i]] = i;

  DatasetBundle b;
  auto& ds = b.data;
  ds.max_len = c.max_len;
  const int iw = digits(n - 1), uw = digits(c.users - 1);
  for (std::size_t i = 0; i < n; ++i) {
    ds.item_ids.push_back(numbered("item", i, iw));
    ds.item_index.emplace(ds.item_ids.back(), static_cast<Index>(i));
    b.item_text.push_back(compose_item_text({"synthetic item " + std::to_string(i),
                                             std::to_string(10 + pos_of[i] % 90) + ".00", "synth",
                                             "arc " + std::to_string(pos_of[i] * 8 / n), {}}));
  }
  b.has_image.assign(n, c.image_dim ? 1 : 0);

  const bool uniform = c.popularity_skew == 0.0;
  const auto sampler = make_sampler(n, c.popularity_skew, c.seed);
  for (std::size_t u = 0; u < c.users; ++u) {
    const CounterRng rng(c.seed, kWalkSite, u);
    const auto len = c.min_length + rng.below(0, c.max_length - c.min_length + 1);
    std::size_t p = uniform ? rng.below(1, n) : sampler.draw(rng.uniform(1));
    std::vector<Index> seq;
    seq.reserve(len);
    seq.push_back(static_cast<Index>(item_at[p]));
    for (std::size_t t = 1; t < len; ++t) {
      if (rng.uniform(2 * t + 2) < c.noise) p = uniform ? rng.below(2 * t + 3, n) : sampler.draw(rng.uniform(2 * t + 3));
      else p = (p + 1) % n;
      seq.push_back(static_cast<Index>(item_at[p]));
    }
    ds.user_ids.push_back(numbered("user", u, uw));
    ds.sequences.push_back(std::move(seq));
  }

  // Sinusoids at doubling frequencies of cycle position.
  std::size_t freqs = 0;
  while ((std::size_t{1} << freqs) <= n / 2 && freqs < 8) ++freqs;
  const std::size_t f = 2 * freqs;
  std::vector<double> features(n * f);
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(pos_of[i]) / static_cast<double>(n);
    for (std::size_t k = 0; k < freqs; ++k) {
      const double w = static_cast<double>(std::size_t{1} << k) * angle;
      features[i * f + 2 * k] = std::cos(w);
      features[i * f + 2 * k + 1] = std::sin(w);
    }
  }
  b.lang = project(features, n, f, c.text_dim, c.text_noise, c.seed, kTextSite);
  b.image = project(features, n, f, c.image_dim, c.image_noise, c.seed, kImageSite);

  auto& m = b.manifest;
  m.set("source", "synth");
  m.set("synth.users", std::uint64_t{c.users});
  m.set("synth.items", std::uint64_t{c.items});
  m.set("synth.noise", c.noise);
  m.set("synth.popularity_skew", c.popularity_skew);
  m.set("synth.seed", c.seed);
  m.set("synth.min_length", std::uint64_t{c.min_length});
  m.set("synth.max_length", std::uint64_t{c.max_length});
  m.set("synth.text_noise", c.text_noise);
  m.set("synth.image_noise", c.image_noise);
  m.set("imageless_policy", "zero");
  return b;
}

}  // namespace fmrlrec
