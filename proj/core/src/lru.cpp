#include "fmrlrec/lru.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fmrlrec/error.hpp"
#include "fmrlrec/ops.hpp"
#include "fmrlrec/rng.hpp"
#include "fmrlrec/scan.hpp"

namespace fmrlrec {

namespace {

// One time slot of the batched scan: `a` has one lane per channel (lambda is
// shared across the batch), `b` one lane per (batch, channel).
template <typename T>
struct LaneBlock {
  std::vector<T> ar, ai, br, bi;
};

template <typename T>
LaneBlock<T> lane_combine(const LaneBlock<T>& first, const LaneBlock<T>& second) {
  const auto H = first.ar.size();
  const auto n = first.br.size();
  LaneBlock<T> out{std::vector<T>(H), std::vector<T>(H), std::vector<T>(n), std::vector<T>(n)};
  for (std::size_t h = 0; h < H; ++h) {
    out.ar[h] = second.ar[h] * first.ar[h] - second.ai[h] * first.ai[h];
    out.ai[h] = second.ar[h] * first.ai[h] + second.ai[h] * first.ar[h];
  }
  for (std::size_t base = 0; base < n; base += H) {
    for (std::size_t h = 0; h < H; ++h) {
      const auto i = base + h;
      out.br[i] = second.ar[h] * first.br[i] - second.ai[h] * first.bi[i] + second.br[i];
      out.bi[i] = second.ar[h] * first.bi[i] + second.ai[h] * first.br[i] + second.bi[i];
    }
  }
  return out;
}

// h_k = a h_{k-1} + b_k over the time axis of [B, L, H] buffers. With
// `reverse` the recurrence runs from k = L-1 down to 0.
template <typename T>
void run_scan(std::span<const T> a_re, std::span<const T> a_im, const T* b_re, const T* b_im,
              std::size_t B, std::size_t L, std::size_t H, bool reverse, T* h_re, T* h_im) {
  const auto lanes = B * H;
  LaneBlock<T> identity{std::vector<T>(H, T{1}), std::vector<T>(H, T{0}), std::vector<T>(lanes, T{0}),
                        std::vector<T>(lanes, T{0})};
  std::vector<LaneBlock<T>> slots(L);
  for (std::size_t k = 0; k < L; ++k) {
    const auto t = reverse ? L - 1 - k : k;
    auto& s = slots[k];
    s.ar.assign(a_re.begin(), a_re.end());
    s.ai.assign(a_im.begin(), a_im.end());
    s.br.resize(lanes);
    s.bi.resize(lanes);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(b_re + (b * L + t) * H, H, s.br.data() + b * H);
      std::copy_n(b_im + (b * L + t) * H, H, s.bi.data() + b * H);
    }
  }
  associative_scan(slots, identity, lane_combine<T>);
  for (std::size_t k = 0; k < L; ++k) {
    const auto t = reverse ? L - 1 - k : k;
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(slots[k].br.data() + b * H, H, h_re + (b * L + t) * H);
      std::copy_n(slots[k].bi.data() + b * H, H, h_im + (b * L + t) * H);
    }
  }
}

template <typename T>
std::vector<T> effective_weight(const MaskedLinear<T>& layer) {
  auto w = layer.weight.data();
  std::vector<T> out(w.begin(), w.end());
  if (layer.masked()) {
    auto m = layer.mask.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  }
  return out;
}

}  // namespace

template <typename T>
LruParams<T> init_ring(std::size_t width, double r_min, double r_max, std::uint64_t seed,
                       std::uint64_t site, const SizeLadder& ladder, bool use_mask, bool input_norm) {
  if (!(r_min >= 0.0 && r_min < r_max && r_max <= 1.0)) {
    throw ParameterError("init_ring: need 0 <= r_min < r_max <= 1, got r_min=" + std::to_string(r_min) +
                         " r_max=" + std::to_string(r_max));
  }
  const CounterRng rng(seed, site * 16);
  std::vector<T> nu(width), theta(width), gamma(width);
  const double lo = r_min * r_min;
  const double hi = r_max * r_max;
  for (std::size_t h = 0; h < width; ++h) {
    const double mag2 = std::clamp(lo + (hi - lo) * rng.uniform(2 * h), 1e-12, 1.0 - 1e-12);
    const double mag = std::sqrt(mag2);
    nu[h] = static_cast<T>(std::log(-std::log(mag)));
    theta[h] = static_cast<T>(2.0 * std::numbers::pi * rng.uniform(2 * h + 1));
    gamma[h] = static_cast<T>(std::sqrt(1.0 - mag2));
  }
  LruParams<T> p;
  p.nu = Tensor<T>::from_vector({width}, std::move(nu), true);
  p.theta = Tensor<T>::from_vector({width}, std::move(theta), true);
  p.gamma_norm = Tensor<T>::from_vector({width}, std::move(gamma), input_norm);
  p.input_norm = input_norm;
  const auto H = static_cast<double>(width);
  const auto square = LinearCase::square;
  p.b_re = make_masked_linear<T>(width, width, square, 1, ladder, false, use_mask, 1.0 / std::sqrt(2.0 * H), seed, site * 16 + 1);
  p.b_im = make_masked_linear<T>(width, width, square, 1, ladder, false, use_mask, 1.0 / std::sqrt(2.0 * H), seed, site * 16 + 2);
  p.c_re = make_masked_linear<T>(width, width, square, 1, ladder, false, use_mask, 1.0 / std::sqrt(H), seed, site * 16 + 3);
  p.c_im = make_masked_linear<T>(width, width, square, 1, ladder, false, use_mask, 1.0 / std::sqrt(H), seed, site * 16 + 4);
  p.d_skip = make_masked_linear<T>(width, width, square, 1, ladder, false, use_mask, 1.0 / std::sqrt(H), seed, site * 16 + 5);
  return p;
}

template <typename T>
ComplexPair<T> lru_lambda(const LruParams<T>& p) {
  const auto magnitude = exp(scale(exp(p.nu), T{-1}));
  return {mul(magnitude, cos(p.theta)), mul(magnitude, sin(p.theta))};
}

template <typename T>
Tensor<T> complex_linear_scan(const Tensor<T>& lambda_re, const Tensor<T>& lambda_im,
                              const Tensor<T>& b_re, const Tensor<T>& b_im) {
  if (b_re.rank() != 3 || b_re.shape() != b_im.shape()) {
    throw DimensionError("complex_linear_scan: b must be [B, L, H] pairs, got " +
                         shape_to_string(b_re.shape()) + " and " + shape_to_string(b_im.shape()));
  }
  const auto B = b_re.extent(0);
  const auto L = b_re.extent(1);
  const auto H = b_re.extent(2);
  if (lambda_re.shape() != Shape{H} || lambda_im.shape() != Shape{H}) {
    throw DimensionError("complex_linear_scan: lambda must be [" + std::to_string(H) + "]");
  }
  std::vector<T> h_re(B * L * H), h_im(B * L * H);
  run_scan<T>(lambda_re.data(), lambda_im.data(), b_re.data().data(), b_im.data().data(), B, L, H,
              false, h_re.data(), h_im.data());
  std::vector<T> out(B * L * 2 * H);
  for (std::size_t r = 0; r < B * L; ++r) {
    std::copy_n(h_re.data() + r * H, H, out.data() + r * 2 * H);
    std::copy_n(h_im.data() + r * H, H, out.data() + r * 2 * H + H);
  }
  return detail::make_result<T>(
      {B, L, 2 * H}, std::move(out), {lambda_re, lambda_im, b_re, b_im},
      [B, L, H, h_re = std::move(h_re), h_im = std::move(h_im)](TensorNode<T>& self) {
        const auto& lr = self.parents[0]->data;
        const auto& li = self.parents[1]->data;
        std::vector<T> g_re(B * L * H), g_im(B * L * H);
        for (std::size_t r = 0; r < B * L; ++r) {
          std::copy_n(self.grad.data() + r * 2 * H, H, g_re.data() + r * H);
          std::copy_n(self.grad.data() + r * 2 * H + H, H, g_im.data() + r * H);
        }
        // Adjoint recurrence: delta_k = g_k + conj(lambda) delta_{k+1}.
        std::vector<T> conj_im(li.size());
        for (std::size_t h = 0; h < H; ++h) conj_im[h] = -li[h];
        std::vector<T> d_re(B * L * H), d_im(B * L * H);
        run_scan<T>(lr, conj_im, g_re.data(), g_im.data(), B, L, H, true, d_re.data(), d_im.data());

        auto gbr = detail::parent_grad(self, 2);
        auto gbi = detail::parent_grad(self, 3);
        for (std::size_t i = 0; i < d_re.size(); ++i) {
          if (!gbr.empty()) gbr[i] += d_re[i];
          if (!gbi.empty()) gbi[i] += d_im[i];
        }
        auto glr = detail::parent_grad(self, 0);
        auto gli = detail::parent_grad(self, 1);
        if (glr.empty() && gli.empty()) return;
        // dL/dlambda = sum_k delta_k conj(h_{k-1})
        std::vector<T> acc_re(H, T{0}), acc_im(H, T{0});
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t k = 1; k < L; ++k) {
            const auto cur = (b * L + k) * H;
            const auto prev = (b * L + k - 1) * H;
            for (std::size_t h = 0; h < H; ++h) {
              const T dr = d_re[cur + h], di = d_im[cur + h];
              const T hr = h_re[prev + h], hi = h_im[prev + h];
              acc_re[h] += dr * hr + di * hi;
              acc_im[h] += di * hr - dr * hi;
            }
          }
        }
        for (std::size_t h = 0; h < H; ++h) {
          if (!glr.empty()) glr[h] += acc_re[h];
          if (!gli.empty()) gli[h] += acc_im[h];
        }
      },
      "complex_linear_scan");
}

template <typename T>
Tensor<T> lru_parallel_scan(const LruParams<T>& p, const Tensor<T>& x) {
  const auto H = p.width();
  if (x.rank() != 3 || x.extent(2) != H) {
    throw DimensionError("lru: input " + shape_to_string(x.shape()) + " does not match width " +
                         std::to_string(H));
  }
  const auto lambda = lru_lambda(p);
  auto bx_re = matmul(x, fmrlrec_apply(p.b_re));
  auto bx_im = matmul(x, fmrlrec_apply(p.b_im));
  if (p.input_norm) {
    bx_re = mul(bx_re, p.gamma_norm);
    bx_im = mul(bx_im, p.gamma_norm);
  }
  const auto h = complex_linear_scan(lambda.re, lambda.im, bx_re, bx_im);
  const auto y = sub(matmul(slice_last(h, 0, H), fmrlrec_apply(p.c_re)),
                     matmul(slice_last(h, H, 2 * H), fmrlrec_apply(p.c_im)));
  return add(y, matmul(x, fmrlrec_apply(p.d_skip)));
}

template <typename T>
Tensor<T> lru_sequential(const LruParams<T>& p, const Tensor<T>& x) {
  const auto H = p.width();
  if (x.rank() != 3 || x.extent(2) != H) {
    throw DimensionError("lru: input " + shape_to_string(x.shape()) + " does not match width " +
                         std::to_string(H));
  }
  const auto B = x.extent(0);
  const auto L = x.extent(1);
  const auto br = effective_weight(p.b_re), bi = effective_weight(p.b_im);
  const auto cr = effective_weight(p.c_re), ci = effective_weight(p.c_im);
  const auto dw = effective_weight(p.d_skip);
  std::vector<Complex<T>> lambda(H);
  for (std::size_t h = 0; h < H; ++h) {
    const T mag = std::exp(-std::exp(p.nu.data()[h]));
    lambda[h] = {mag * std::cos(p.theta.data()[h]), mag * std::sin(p.theta.data()[h])};
  }
  auto xd = x.data();
  std::vector<T> y(B * L * H, T{0});
  std::vector<Complex<T>> state(H);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(state.begin(), state.end(), Complex<T>{});
    for (std::size_t k = 0; k < L; ++k) {
      const T* xk = xd.data() + (b * L + k) * H;
      T* yk = y.data() + (b * L + k) * H;
      for (std::size_t h = 0; h < H; ++h) {
        Complex<T> u{};
        for (std::size_t i = 0; i < H; ++i) {
          u.re += xk[i] * br[i * H + h];
          u.im += xk[i] * bi[i * H + h];
        }
        if (p.input_norm) {
          const T g = p.gamma_norm.data()[h];
          u = {u.re * g, u.im * g};
        }
        state[h] = lambda[h] * state[h] + u;
      }
      for (std::size_t o = 0; o < H; ++o) {
        T acc{0};
        for (std::size_t h = 0; h < H; ++h) acc += state[h].re * cr[h * H + o] - state[h].im * ci[h * H + o];
        for (std::size_t i = 0; i < H; ++i) acc += xk[i] * dw[i * H + o];
        yk[o] = acc;
      }
    }
  }
  return Tensor<T>::from_vector(x.shape(), std::move(y));
}

template <typename T>
LruParams<T> slice_lru(const LruParams<T>& p, std::size_t m, bool detach) {
  auto cut = [&](const Tensor<T>& v) {
    auto s = slice_last(v, 0, m);
    return detach ? s.detach(v.requires_grad()) : s;
  };
  LruParams<T> out;
  out.nu = cut(p.nu);
  out.theta = cut(p.theta);
  out.gamma_norm = cut(p.gamma_norm);
  out.input_norm = p.input_norm;
  out.b_re = slice_linear(p.b_re, m, detach);
  out.b_im = slice_linear(p.b_im, m, detach);
  out.c_re = slice_linear(p.c_re, m, detach);
  out.c_im = slice_linear(p.c_im, m, detach);
  out.d_skip = slice_linear(p.d_skip, m, detach);
  return out;
}

#define FMRLREC_INSTANTIATE_LRU(T)                                                                 \
  template LruParams<T> init_ring<T>(std::size_t, double, double, std::uint64_t, std::uint64_t,    \
                                     const SizeLadder&, bool, bool);                              \
  template ComplexPair<T> lru_lambda(const LruParams<T>&);                                        \
  template Tensor<T> complex_linear_scan(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                         const Tensor<T>&);                                       \
  template Tensor<T> lru_parallel_scan(const LruParams<T>&, const Tensor<T>&);                    \
  template Tensor<T> lru_sequential(const LruParams<T>&, const Tensor<T>&);                       \
  template LruParams<T> slice_lru(const LruParams<T>&, std::size_t, bool);

FMRLREC_INSTANTIATE_LRU(float)
FMRLREC_INSTANTIATE_LRU(double)

#undef FMRLREC_INSTANTIATE_LRU

}  // namespace fmrlrec
