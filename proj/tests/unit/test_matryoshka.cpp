#include <gtest/gtest.h>

#include <random>

#include "fmrlrec/error.hpp"
#include "fmrlrec/matryoshka.hpp"
#include "fmrlrec/memory_report.hpp"
#include "fmrlrec/model.hpp"
#include "fmrlrec/optimizer.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace fmrlrec;
using testutil::random_tensor;

namespace {

std::vector<double> values(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(SizeLadder, ParseAndValidate) {
  EXPECT_EQ(SizeLadder::parse("8..64").to_string(), "8,16,32,64");
  EXPECT_EQ(SizeLadder::parse("2,4,8").max(), 8u);
  EXPECT_THROW(SizeLadder(std::vector<std::size_t>{8, 24}), ParameterError);
  EXPECT_THROW(SizeLadder(std::vector<std::size_t>{1, 2}), ParameterError);
  EXPECT_THROW(SizeLadder(std::vector<std::size_t>{}), ParameterError);
  EXPECT_THROW(SizeLadder::parse("8..60"), ParameterError);
  const auto l = SizeLadder::parse("8..64");
  EXPECT_EQ(l.chunk_begin(0), 0u);
  EXPECT_EQ(l.chunk_begin(2), 16u);
  EXPECT_EQ(l.prefix_through(16).to_string(), "8,16");
}

TEST(BuildMask, SquareExample) {
  const auto m = build_mask<double>(4, 4, LinearCase::square, SizeLadder({2, 4}));
  EXPECT_EQ(values(m), (std::vector<double>{1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1}));
}

TEST(BuildMask, UpExampleWithScale) {
  const auto m = build_mask<double>(4, 8, LinearCase::up, SizeLadder({2, 4}));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      const double expected = (j < 4) ? (i < 2 ? 1.0 : 0.0) : 1.0;
      EXPECT_EQ(m.data()[i * 8 + j], expected) << i << "," << j;
    }
}

TEST(BuildMask, SingleSizeLadderIsAllOnes) {
  for (auto kind : {LinearCase::up, LinearCase::down, LinearCase::square}) {
    const auto [d1, d2] = case_extents(kind, 16, 2);
    const auto mask = build_mask<double>(d1, d2, kind, SizeLadder({16}));
    for (auto v : mask.data()) EXPECT_EQ(v, 1.0);
  }
  const auto mask = build_mask<double>(7, 16, LinearCase::output_only, SizeLadder::parse("2..16"));
  for (auto v : mask.data()) EXPECT_EQ(v, 1.0);
}

TEST(BuildMask, MatchesEnumeratedCondition) {
  const auto ladder = SizeLadder::parse("2..32");
  const std::vector<std::size_t> sizes(ladder.sizes().begin(), ladder.sizes().end());
  for (std::size_t k : {1u, 2u, 4u}) {
    const auto up = build_mask<double>(32, 32 * k, LinearCase::up, ladder);
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32 * k; ++j)
        ASSERT_EQ(up.data()[i * 32 * k + j], oracle::mask_entry(i, j, sizes, 1, k) ? 1.0 : 0.0);
    const auto down = build_mask<double>(32 * k, 32, LinearCase::down, ladder);
    for (std::size_t i = 0; i < 32 * k; ++i)
      for (std::size_t j = 0; j < 32; ++j)
        ASSERT_EQ(down.data()[i * 32 + j], oracle::mask_entry(i, j, sizes, k, 1) ? 1.0 : 0.0);
  }
}

TEST(BuildMask, SparsityFormula) {
  for (std::size_t k : {1u, 2u, 4u}) {
    for (std::size_t d : {4u, 16u, 64u}) {
      const auto ladder = SizeLadder::doubling(2, d);
      double expected = 0.0;
      for (std::size_t j = 0; j < ladder.count(); ++j)
        expected += double(ladder[j]) * double(k) * double(ladder[j] - ladder.chunk_begin(j));
      expected /= double(d) * double(k * d);
      for (auto kind : {LinearCase::up, LinearCase::down}) {
        const auto [d1, d2] = case_extents(kind, d, k);
        double ones = 0;
        const auto mask = build_mask<double>(d1, d2, kind, ladder);
        for (auto v : mask.data()) ones += v;
        EXPECT_NEAR(ones / double(d1 * d2), expected, 1e-15);
      }
    }
  }
}

TEST(BuildMask, InconsistentShapeIsConfigError) {
  const auto ladder = SizeLadder::parse("2..8");
  EXPECT_THROW(build_mask<double>(8, 12, LinearCase::up, ladder), ConfigError);
  EXPECT_THROW(build_mask<double>(4, 8, LinearCase::square, ladder), ConfigError);
  EXPECT_THROW(build_mask<double>(8, 8, LinearCase::down, SizeLadder::parse("2..16")), ConfigError);
}

TEST(MaskedLinear, InitialMaskedEntriesAreZero) {
  const auto layer =
      make_masked_linear<double>(16, 32, LinearCase::up, 2, SizeLadder::parse("4..16"), true, true, 1.0, 3, 9);
  for (std::size_t i = 0; i < layer.weight.numel(); ++i)
    if (layer.mask.data()[i] == 0.0) {
      EXPECT_EQ(layer.weight.data()[i], 0.0);
    }
}

TEST(MaskedLinear, AllOnesMaskLeavesWeight) {
  auto layer = make_masked_linear<double>(8, 8, LinearCase::square, 1, SizeLadder({8}), false, true, 1.0, 0, 0);
  EXPECT_EQ(values(fmrlrec_apply(layer)), values(layer.weight));
}

// Chunked slice products versus x . (mask (.) W) on 100 random instances per case.
TEST(MaskedLinear, ChunkedOracleEquivalence) {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> pick_d(1, 4), pick_k(1, 3), pick_rows(1, 5);
  for (auto kind : {LinearCase::up, LinearCase::down, LinearCase::square, LinearCase::output_only}) {
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t d = std::size_t{1} << (pick_d(gen) + 1);
      const std::size_t k = kind == LinearCase::square || kind == LinearCase::output_only ? 1 : pick_k(gen);
      const auto ladder = SizeLadder::doubling(2, d);
      const auto [d1, d2] = case_extents(kind, d, k, 5);
      auto layer = make_masked_linear<double>(d1, d2, kind, k, ladder, rep % 2 == 0, true, 1.0, rep, 1);
      // Random weights everywhere, including masked entries, so the mask must do the work.
      auto w = layer.weight.mutable_data();
      std::normal_distribution<double> n01;
      for (auto& v : w) v = n01(gen);
      if (layer.bias.defined())
        for (auto& v : layer.bias.mutable_data()) v = n01(gen);
      const auto x = random_tensor({std::size_t(pick_rows(gen)), d1}, gen);
      const auto fast = linear_forward(x, layer);
      const auto ref = chunked_forward_oracle(x, layer);
      ASSERT_LT(testutil::max_abs_diff(fast, ref), 1e-12) << to_string(kind) << " d=" << d << " k=" << k;
    }
  }
}

TEST(MaskedLinear, SingleChunkIsPlainMatmulAndZeroInputZeroOutput) {
  std::mt19937_64 gen(12);
  const auto layer = make_masked_linear<double>(8, 16, LinearCase::up, 2, SizeLadder({8}), false, true, 1.0, 0, 2);
  const auto x = random_tensor({3, 8}, gen);
  EXPECT_LT(testutil::max_abs_diff(chunked_forward_oracle(x, layer), matmul(x, layer.weight)), 1e-12);
  const auto y = chunked_forward_oracle(Tensor<double>::zeros({2, 8}), layer);
  for (auto v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(MaskedLinear, PrefixProductEqualsSliceProduct) {
  std::mt19937_64 gen(13);
  const auto ladder = SizeLadder::parse("2..16");
  for (auto kind : {LinearCase::up, LinearCase::down, LinearCase::square}) {
    const std::size_t k = kind == LinearCase::square ? 1 : 2;
    const auto [d1, d2] = case_extents(kind, 16, k);
    auto layer = make_masked_linear<double>(d1, d2, kind, k, ladder, true, true, 1.0, 4, 4);
    for (auto& v : layer.bias.mutable_data()) v = 0.25;
    for (std::size_t m : ladder.sizes()) {
      const auto small = slice_linear(layer, m, true);
      const std::size_t in_m = small.in_features(), out_m = small.out_features();
      auto x = random_tensor({4, d1}, gen);
      // Entries beyond the input prefix must not leak into the output prefix.
      const auto full = linear_forward(x, layer);
      const auto y = linear_forward(slice_last(x, 0, in_m), small);
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < out_m; ++c)
          EXPECT_NEAR(full.data()[r * d2 + c], y.data()[r * out_m + c], 1e-12);
    }
  }
}

TEST(MaskedLinear, GradientContainmentAndOptimizerStep) {
  std::mt19937_64 gen(14);
  const auto ladder = SizeLadder::parse("2..16");
  auto layer = make_masked_linear<double>(16, 32, LinearCase::up, 2, ladder, true, true, 0.5, 5, 5);
  const auto x = random_tensor({6, 16}, gen);
  const auto w = random_tensor({6, 32}, gen);
  backward(sum(mul(silu(linear_forward(x, layer)), w)));
  ASSERT_TRUE(layer.weight.has_grad());
  for (std::size_t i = 0; i < layer.weight.numel(); ++i)
    if (layer.mask.data()[i] == 0.0) {
      EXPECT_EQ(layer.weight.grad()[i], 0.0);
    }

  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.1;
  AdamW<double> opt({{"w", layer.weight}, {"b", layer.bias}}, cfg);
  opt.step();
  for (std::size_t i = 0; i < layer.weight.numel(); ++i)
    if (layer.mask.data()[i] == 0.0) {
      EXPECT_EQ(layer.weight.data()[i], 0.0);
    }
}

TEST(Extraction, SliceShapesPerCase) {
  const auto ladder = SizeLadder::parse("4..16");
  const auto up = make_masked_linear<double>(16, 32, LinearCase::up, 2, ladder, true, true, 1.0, 0, 0);
  const auto down = make_masked_linear<double>(32, 16, LinearCase::down, 2, ladder, true, true, 1.0, 0, 1);
  const auto out = make_masked_linear<double>(5, 16, LinearCase::output_only, 1, ladder, true, true, 1.0, 0, 2);
  EXPECT_EQ(slice_linear(up, 8, true).weight.shape(), (Shape{8, 16}));
  EXPECT_EQ(slice_linear(up, 8, true).bias.shape(), (Shape{16}));
  EXPECT_EQ(slice_linear(down, 8, true).weight.shape(), (Shape{16, 8}));
  EXPECT_EQ(slice_linear(out, 4, true).weight.shape(), (Shape{5, 4}));
  EXPECT_FALSE(slice_linear(up, 8, true).masked());
  EXPECT_THROW(slice_linear(up, 6, true), ParameterError);
}

TEST(MemoryReport, GeometricSavingSequence) {
  const auto r = memory_report(4, 2.0, 32, 50, SizeLadder::parse("128..2048"));
  const std::vector<double> analytic{0.0, 0.25, 0.3125, 0.328125, 0.33203125};
  const std::vector<double> reference{0.0, 0.2516, 0.3139, 0.3290, 0.3325};
  ASSERT_EQ(r.cumulative_Rs.size(), analytic.size());
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    EXPECT_NEAR(r.cumulative_Rs[t], analytic[t], 1e-12);
    EXPECT_NEAR(r.cumulative_Rs[t], reference[t], 0.005);
  }
  EXPECT_NEAR(r.ratio_R, r.params_independent / r.params_fmrl, 1e-12);
  EXPECT_NEAR(r.saving_Rs, r.ratio_R - 1.0, 1e-12);
}

TEST(MemoryReport, SavingApproachesOneThirdFromBelow) {
  double prev = -1.0;
  for (std::size_t t = 1; t <= 12; ++t) {
    const auto r = memory_report(1, 1.0, 1, 1, SizeLadder::doubling(2, std::size_t{2} << (t - 1)));
    EXPECT_NEAR(r.saving_Rs, oracle::geometric_saving(t), 1e-12) << t;
    EXPECT_LT(r.saving_Rs, 1.0 / 3.0);
    EXPECT_GT(r.saving_Rs, prev);
    prev = r.saving_Rs;
  }
}

TEST(MemoryReport, WorkedExample) {
  const auto r = memory_report(4, 2.0, 32, 50, SizeLadder::parse("2..512"));
  EXPECT_NEAR(r.delta, 32.0 * 50.0 / 512.0, 1e-12);
  EXPECT_NEAR(r.params_fmrl, 4 * 2 * 512.0 * 512.0, 1e-6);
  // Roughly 700K weights and 2M activations, with K and M read as 2^10 and 2^20.
  EXPECT_NEAR(r.weights_saved / 1024.0, 700.0, 0.05 * 700.0);
  EXPECT_NEAR(r.activations_saved / (1024.0 * 1024.0), 2.0, 0.05 * 2.0);
  EXPECT_NEAR(r.weights_saved, 4 * r.saving_Rs * 512 * 1024, 1e-6);
  EXPECT_NEAR(r.activations_saved, 4 * r.saving_Rs * 32 * 50 * 1024, 1e-6);
}
