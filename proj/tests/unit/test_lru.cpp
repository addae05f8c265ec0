#include <gtest/gtest.h>

#include <complex>
#include <random>

#include "fmrlrec/error.hpp"
#include "fmrlrec/lru.hpp"
#include "fmrlrec/optimizer.hpp"
#include "fmrlrec/scan.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace fmrlrec;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

template <typename T>
LruParams<T> ring(std::size_t h, double r_min, double r_max, std::uint64_t seed, bool masked = false) {
  const auto ladder = masked ? SizeLadder::doubling(2, h) : SizeLadder({h});
  return init_ring<T>(h, r_min, r_max, seed, 1, ladder, masked);
}

template <typename T>
std::vector<double> magnitudes(const LruParams<T>& p) {
  const auto l = lru_lambda(p);
  std::vector<double> out;
  for (std::size_t i = 0; i < p.width(); ++i) out.push_back(std::hypot(double(l.re.data()[i]), double(l.im.data()[i])));
  return out;
}

void fill(Tensor<double> t, double value) {
  for (auto& v : t.mutable_data()) v = value;
}

}  // namespace

TEST(InitRing, RadiusBoundsAndGamma) {
  const auto p = ring<double>(256, 0.0, 0.1, 1);
  const auto mags = magnitudes(p);
  for (std::size_t i = 0; i < mags.size(); ++i) {
    EXPECT_LE(mags[i], 0.1 + 1e-12);
    EXPECT_NEAR(p.gamma_norm.data()[i], std::sqrt(1.0 - mags[i] * mags[i]), 1e-12);
    EXPECT_GE(p.theta.data()[i], 0.0);
    EXPECT_LT(p.theta.data()[i], 2.0 * std::numbers::pi);
  }
}

TEST(InitRing, DegenerateRing) {
  for (double m : magnitudes(ring<double>(64, 0.5 - 1e-9, 0.5, 2))) EXPECT_NEAR(m, 0.5, 1e-8);
}

TEST(InitRing, RejectsBadRadii) {
  EXPECT_THROW(ring<double>(4, 0.5, 0.5, 0), ParameterError);
  EXPECT_THROW(ring<double>(4, -0.1, 0.5, 0), ParameterError);
  EXPECT_THROW(ring<double>(4, 0.2, 1.5, 0), ParameterError);
}

TEST(InitRing, SquaredMagnitudeIsUniform) {
  const double r_min = 0.3, r_max = 0.4;
  std::vector<double> sq;
  for (std::uint64_t seed = 0; sq.size() < 100000; ++seed)
    for (double m : magnitudes(ring<double>(16, r_min, r_max, seed))) sq.push_back(m * m);
  const double lo = r_min * r_min, hi = r_max * r_max;
  const double d = oracle::ks_statistic(sq, [&](double v) { return std::clamp((v - lo) / (hi - lo), 0.0, 1.0); });
  EXPECT_GT(oracle::ks_p_value(d, sq.size()), 0.01) << "D=" << d;
}

TEST(Lambda, StableForAnyNu) {
  auto p = ring<double>(8, 0.0, 0.9, 3);
  const std::vector<double> nus{-20, -5, -1, 0, 1, 5, 20, -15};
  std::copy(nus.begin(), nus.end(), p.nu.mutable_data().begin());
  for (double m : magnitudes(p)) {
    EXPECT_LT(m, 1.0);
    EXPECT_GE(m, 0.0);
  }
}

TEST(ScanCombine, Associative) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n01;
  auto draw = [&] { return ScanElement<double>{{n01(gen), n01(gen)}, {n01(gen), n01(gen)}}; };
  for (int rep = 0; rep < 1000; ++rep) {
    const auto p = draw(), q = draw(), r = draw();
    const auto left = scan_combine(scan_combine(p, q), r);
    const auto right = scan_combine(p, scan_combine(q, r));
    EXPECT_NEAR(left.a.re, right.a.re, 1e-12);
    EXPECT_NEAR(left.a.im, right.a.im, 1e-12);
    EXPECT_NEAR(left.b.re, right.b.re, 1e-12);
    EXPECT_NEAR(left.b.im, right.b.im, 1e-12);
  }
}

TEST(AssociativeScan, MatchesSequentialFoldForEveryLength) {
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<long> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = long(i * 7 % 5) - 2;
    auto ys = xs;
    associative_scan(ys, 0L, [](long a, long b) { return a + b; });
    long acc = 0;
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(ys[i], acc += xs[i]);
  }
}

TEST(LruPaths, ParallelEqualsSequentialDouble) {
  std::mt19937_64 gen(6);
  const auto p = ring<double>(64, 0.5, 0.99, 6, true);
  const auto x = random_tensor({4, 50, 64}, gen);
  EXPECT_LT(max_abs_diff(lru_parallel_scan(p, x), lru_sequential(p, x)), 1e-6);
}

TEST(LruPaths, ParallelEqualsSequentialFloat) {
  std::mt19937_64 gen(7);
  const auto p = ring<float>(64, 0.5, 0.99, 7, true);
  const auto x = random_tensor<float>({4, 50, 64}, gen);
  EXPECT_LT(max_abs_diff(lru_parallel_scan(p, x), lru_sequential(p, x)), 1e-4);
}

TEST(LruPaths, LengthOne) {
  std::mt19937_64 gen(8);
  const auto p = ring<double>(8, 0.2, 0.8, 8);
  const auto x = random_tensor({3, 1, 8}, gen);
  EXPECT_LT(max_abs_diff(lru_parallel_scan(p, x), lru_sequential(p, x)), 1e-14);
  // h_1 = gamma (.) (x B), so y_1 = Re(h_1 C) + x D.
  const auto expected = add(sub(matmul(mul(matmul(x, p.b_re.weight), p.gamma_norm), p.c_re.weight),
                                matmul(mul(matmul(x, p.b_im.weight), p.gamma_norm), p.c_im.weight)),
                            matmul(x, p.d_skip.weight));
  EXPECT_LT(max_abs_diff(lru_sequential(p, x), expected), 1e-12);
}

TEST(LruPaths, ZeroLambdaIsMemoryless) {
  std::mt19937_64 gen(9);
  auto p = ring<double>(8, 0.2, 0.8, 9);
  fill(p.nu, 10.0);  // |lambda| = exp(-e^10) underflows to 0
  const auto x = random_tensor({2, 6, 8}, gen);
  const auto y = lru_sequential(p, x);
  // Each step alone must reproduce the same output.
  for (std::size_t t = 0; t < 6; ++t) {
    std::vector<double> one(16);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 8; ++c) one[b * 8 + c] = x.data()[(b * 6 + t) * 8 + c];
    const auto yt = lru_sequential(p, Tensor<double>::from_vector({2, 1, 8}, one));
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.data()[(b * 6 + t) * 8 + c], yt.data()[b * 8 + c], 1e-12);
  }
}

TEST(LruPaths, ZeroInputZeroOutput) {
  const auto p = ring<double>(8, 0.2, 0.8, 10);
  const auto x = Tensor<double>::zeros({2, 5, 8});
  const auto a = lru_parallel_scan(p, x), b = lru_sequential(p, x);
  for (auto v : a.data()) EXPECT_EQ(v, 0.0);
  for (auto v : b.data()) EXPECT_EQ(v, 0.0);
}

TEST(LruPaths, ImpulseDecaysGeometrically) {
  auto p = ring<double>(4, 0.2, 0.8, 11);
  const double lambda = 0.7;
  fill(p.nu, std::log(-std::log(lambda)));
  fill(p.theta, 0.0);
  fill(p.c_im.weight, 0.0);
  fill(p.d_skip.weight, 0.0);
  fill(p.c_re.weight, 0.0);
  for (std::size_t i = 0; i < 4; ++i) p.c_re.weight.mutable_data()[i * 4 + i] = 1.0;
  std::vector<double> impulse(10 * 4, 0.0);
  for (std::size_t c = 0; c < 4; ++c) impulse[c] = 1.0 + double(c);
  const auto x = Tensor<double>::from_vector({1, 10, 4}, impulse);
  for (const auto& y : {lru_parallel_scan(p, x), lru_sequential(p, x)}) {
    for (std::size_t k = 1; k < 10; ++k)
      for (std::size_t c = 0; c < 4; ++c)
        EXPECT_NEAR(y.data()[k * 4 + c], std::pow(lambda, double(k)) * y.data()[c], 1e-12);
  }
}

TEST(LruPaths, MatchesStdComplexReference) {
  std::mt19937_64 gen(12);
  const std::size_t H = 8, L = 12;
  const auto p = ring<double>(H, 0.3, 0.95, 12, true);
  const auto x = random_tensor({1, L, H}, gen);
  const auto lam = lru_lambda(p);
  std::vector<std::complex<double>> lambda(H), B(H * H), C(H * H);
  std::vector<double> gamma(p.gamma_norm.data().begin(), p.gamma_norm.data().end());
  const auto br = fmrlrec_apply(p.b_re), bi = fmrlrec_apply(p.b_im);
  const auto cr = fmrlrec_apply(p.c_re), ci = fmrlrec_apply(p.c_im);
  const auto d = fmrlrec_apply(p.d_skip);
  for (std::size_t i = 0; i < H; ++i) lambda[i] = {lam.re.data()[i], lam.im.data()[i]};
  for (std::size_t i = 0; i < H * H; ++i) {
    B[i] = {br.data()[i], bi.data()[i]};
    C[i] = {cr.data()[i], ci.data()[i]};
  }
  const auto ref = oracle::lru_reference({x.data().begin(), x.data().end()}, L, H, lambda, gamma, B, C,
                                         {d.data().begin(), d.data().end()});
  const auto y = lru_parallel_scan(p, x);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-10);
}

TEST(LruPaths, PrefixConsistency) {
  std::mt19937_64 gen(13);
  const std::size_t H = 32;
  const auto p = ring<double>(H, 0.4, 0.9, 13, true);
  const auto x = random_tensor({3, 9, H}, gen);
  const auto full = lru_sequential(p, x);
  for (std::size_t m : {2u, 4u, 8u, 16u, 32u}) {
    const auto small = slice_lru(p, m, true);
    const auto y = lru_sequential(small, slice_last(x, 0, m));
    const auto yp = lru_parallel_scan(small, slice_last(x, 0, m));
    EXPECT_LT(max_abs_diff(y, slice_last(full, 0, m)), 1e-6) << m;
    EXPECT_LT(max_abs_diff(yp, slice_last(full, 0, m)), 1e-6) << m;
  }
}

TEST(LruGrad, FiniteDifferences) {
  std::mt19937_64 gen(14);
  for (bool norm : {true, false}) {
    auto p = init_ring<double>(4, 0.3, 0.9, 14, 1, SizeLadder::doubling(2, 4), true, norm);
    auto x = random_tensor({2, 5, 4}, gen, true);
    const auto w = random_tensor({2, 5, 4}, gen);
    std::vector<Tensor<double>> leaves{x, p.nu, p.theta, p.b_re.weight, p.b_im.weight, p.c_re.weight,
                                       p.c_im.weight, p.d_skip.weight};
    if (norm) leaves.push_back(p.gamma_norm);
    const auto r = oracle::gradcheck(leaves, [&] { return sum(mul(lru_parallel_scan(p, x), w)); });
    EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
  }
}

TEST(LruGrad, EquivalenceHoldsAfterTraining) {
  std::mt19937_64 gen(15);
  auto p = ring<double>(16, 0.5, 0.99, 15, true);
  const auto x = random_tensor({4, 20, 16}, gen);
  const auto target = random_tensor({4, 20, 16}, gen);
  AdamWConfig cfg;
  cfg.lr = 0.05;
  AdamW<double> opt({{"nu", p.nu},
                     {"theta", p.theta},
                     {"gamma", p.gamma_norm},
                     {"b_re", p.b_re.weight},
                     {"b_im", p.b_im.weight},
                     {"c_re", p.c_re.weight},
                     {"c_im", p.c_im.weight},
                     {"d", p.d_skip.weight}},
                    cfg);
  double first = 0, last = 0;
  for (int step = 0; step < 20; ++step) {
    opt.zero_grad();
    const auto diff = sub(lru_parallel_scan(p, x), target);
    const auto loss = sum(mul(diff, diff));
    if (step == 0) first = loss.item();
    last = loss.item();
    backward(loss);
    opt.step();
  }
  EXPECT_LT(last, first);
  EXPECT_LT(max_abs_diff(lru_parallel_scan(p, x), lru_sequential(p, x)), 1e-6);
  for (double m : magnitudes(p)) EXPECT_LT(m, 1.0);
}
