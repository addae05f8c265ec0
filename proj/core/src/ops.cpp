#include "fmrlrec/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fmrlrec/error.hpp"
#include "fmrlrec/rng.hpp"

namespace fmrlrec {

namespace kernels {

template <typename T>
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    T* __restrict crow = C + i * N;
    const T* arow = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = arow[k];
      if (a == T{0}) continue;
      const T* __restrict brow = B + k * N;
      for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* G, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* arow = A + i * K;
    const T* __restrict grow = G + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = arow[k];
      if (a == T{0}) continue;
      T* __restrict crow = C + k * N;
      for (std::size_t j = 0; j < N; ++j) crow[j] += a * grow[j];
    }
  }
}

template <typename T>
std::vector<T> transpose(std::size_t rows, std::size_t cols, const T* src) {
  std::vector<T> out(rows * cols);
  constexpr std::size_t tile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const auto r1 = std::min(rows, r0 + tile);
      const auto c1 = std::min(cols, c0 + tile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = src[r * cols + c];
    }
  }
  return out;
}

}  // namespace kernels

namespace {

using detail::make_result;
using detail::parent_grad;

template <typename T>
std::vector<T> copy_of(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

enum class Broadcast { same, last_axis };

template <typename T>
Broadcast broadcast_kind(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.rank() == 1 && a.rank() >= 1 && b.extent(0) == a.extent(-1)) return Broadcast::last_axis;
  throw DimensionError(std::string(op) + ": cannot combine " + shape_to_string(a.shape()) +
                       " with " + shape_to_string(b.shape()));
}

template <typename T, typename Fwd, typename GradA, typename GradB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* op, Fwd fwd, GradA ga,
                 GradB gb) {
  const auto kind = broadcast_kind(a, b, op);
  const auto n = a.numel();
  const auto width = b.numel();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(n);
  if (kind == Broadcast::same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[i % width]);
  }
  return make_result<T>(
      a.shape(), std::move(out), {a, b},
      [kind, width, ga, gb](TensorNode<T>& self) {
        const auto& av = self.parents[0]->data;
        const auto& bv = self.parents[1]->data;
        auto gA = parent_grad(self, 0);
        auto gB = parent_grad(self, 1);
        const auto& g = self.grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const auto j = kind == Broadcast::same ? i : i % width;
          if (!gA.empty()) gA[i] += ga(g[i], av[i], bv[j]);
          if (!gB.empty()) gB[j] += gb(g[i], av[i], bv[j]);
        }
      },
      op);
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, const char* op, Fwd fwd, Deriv deriv) {
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  return make_result<T>(
      x.shape(), std::move(out), {x},
      [deriv](TensorNode<T>& self) {
        auto gx = parent_grad(self, 0);
        const auto& xv = self.parents[0]->data;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * deriv(xv[i], self.data[i]);
      },
      op);
}

template <typename T>
T sigmoid_scalar(T v) {
  return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.extent(-1) != b.extent(0)) {
    throw DimensionError("matmul: shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " are incompatible");
  }
  const auto K = b.extent(0);
  const auto N = b.extent(1);
  const auto M = a.numel() / K;
  std::vector<T> out(M * N, T{0});
  kernels::gemm_nn(M, K, N, a.data().data(), b.data().data(), out.data());
  Shape shape = a.shape();
  shape.back() = N;
  return make_result<T>(
      std::move(shape), std::move(out), {a, b},
      [M, K, N](TensorNode<T>& self) {
        const auto& av = self.parents[0]->data;
        const auto& bv = self.parents[1]->data;
        auto gA = parent_grad(self, 0);
        auto gB = parent_grad(self, 1);
        if (!gA.empty()) {
          const auto bt = kernels::transpose(K, N, bv.data());
          kernels::gemm_nn(M, N, K, self.grad.data(), bt.data(), gA.data());
        }
        if (!gB.empty()) kernels::gemm_tn(M, K, N, av.data(), self.grad.data(), gB.data());
      },
      "matmul");
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.extent(-1) != b.extent(1)) {
    throw DimensionError("matmul_nt: shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + "^T are incompatible");
  }
  const auto K = b.extent(1);
  const auto N = b.extent(0);
  const auto M = a.numel() / K;
  std::vector<T> out(M * N, T{0});
  const auto bt = kernels::transpose(N, K, b.data().data());
  kernels::gemm_nn(M, K, N, a.data().data(), bt.data(), out.data());
  Shape shape = a.shape();
  shape.back() = N;
  return make_result<T>(
      std::move(shape), std::move(out), {a, b},
      [M, K, N](TensorNode<T>& self) {
        const auto& av = self.parents[0]->data;
        const auto& bv = self.parents[1]->data;
        auto gA = parent_grad(self, 0);
        auto gB = parent_grad(self, 1);
        if (!gA.empty()) kernels::gemm_nn(M, N, K, self.grad.data(), bv.data(), gA.data());
        if (!gB.empty()) kernels::gemm_tn(M, N, K, self.grad.data(), av.data(), gB.data());
      },
      "matmul_nt");
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(
      a, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total{0};
  for (auto v : a.data()) total += v;
  return make_result<T>(
      {}, {total}, {a},
      [](TensorNode<T>& self) {
        auto g = parent_grad(self, 0);
        for (auto& v : g) v += self.grad[0];
      },
      "sum");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, "sigmoid", [](T v) { return sigmoid_scalar(v); }, [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return unary(
      x, "silu", [](T v) { return v * sigmoid_scalar(v); },
      [](T v, T) {
        const T s = sigmoid_scalar(v);
        return s * (T{1} + v * (T{1} - s));
      });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& x) {
  return unary(
      x, "sin", [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <typename T>
Tensor<T> cos(const Tensor<T>& x) {
  return unary(
      x, "cos", [](T v) { return std::cos(v); }, [](T v, T) { return -std::sin(v); });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& alpha, const Tensor<T>& beta, T eps,
                     std::span<const std::size_t> segments) {
  if (!(eps > T{0})) throw ParameterError("layer_norm: eps must be positive");
  const auto d = x.extent(-1);
  if (alpha.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: alpha/beta must be [" + std::to_string(d) + "], got " +
                         shape_to_string(alpha.shape()) + " and " + shape_to_string(beta.shape()));
  }
  std::vector<std::size_t> ends(segments.begin(), segments.end());
  if (ends.empty()) ends.push_back(d);
  for (std::size_t j = 0; j < ends.size(); ++j) {
    const auto prev = j == 0 ? 0 : ends[j - 1];
    if (ends[j] <= prev) throw ParameterError("layer_norm: segment ends must be strictly increasing");
  }
  if (ends.back() != d) {
    throw ParameterError("layer_norm: last segment end " + std::to_string(ends.back()) +
                         " != width " + std::to_string(d));
  }

  const auto rows = x.numel() / d;
  const auto groups = ends.size();
  auto xd = x.data();
  auto ad = alpha.data();
  auto bd = beta.data();
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows * groups);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xd.data() + r * d;
    std::size_t begin = 0;
    for (std::size_t j = 0; j < groups; ++j) {
      const auto end = ends[j];
      const auto n = static_cast<T>(end - begin);
      T mean{0};
      for (auto c = begin; c < end; ++c) mean += xr[c];
      mean /= n;
      T var{0};
      for (auto c = begin; c < end; ++c) var += (xr[c] - mean) * (xr[c] - mean);
      var /= n;
      const T inv = T{1} / std::sqrt(var + eps);
      inv_std[r * groups + j] = inv;
      for (auto c = begin; c < end; ++c) {
        const T h = (xr[c] - mean) * inv;
        xhat[r * d + c] = h;
        out[r * d + c] = ad[c] * h + bd[c];
      }
      begin = end;
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x, alpha, beta},
      [d, rows, groups, ends = std::move(ends), xhat = std::move(xhat),
       inv_std = std::move(inv_std)](TensorNode<T>& self) {
        auto gx = parent_grad(self, 0);
        auto ga = parent_grad(self, 1);
        auto gb = parent_grad(self, 2);
        const auto& av = self.parents[1]->data;
        const auto& g = self.grad;
        for (std::size_t r = 0; r < rows; ++r) {
          std::size_t begin = 0;
          for (std::size_t j = 0; j < groups; ++j) {
            const auto end = ends[j];
            const auto n = static_cast<T>(end - begin);
            T mean_g{0};
            T mean_gx{0};
            for (auto c = begin; c < end; ++c) {
              const auto i = r * d + c;
              const T gh = g[i] * av[c];
              mean_g += gh;
              mean_gx += gh * xhat[i];
              if (!ga.empty()) ga[c] += g[i] * xhat[i];
              if (!gb.empty()) gb[c] += g[i];
            }
            mean_g /= n;
            mean_gx /= n;
            if (!gx.empty()) {
              const T inv = inv_std[r * groups + j];
              for (auto c = begin; c < end; ++c) {
                const auto i = r * d + c;
                gx[i] += inv * (g[i] * av[c] - mean_g - xhat[i] * mean_gx);
              }
            }
            begin = end;
          }
        }
      },
      "layer_norm");
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, DropoutKey key) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const CounterRng rng(key.seed, key.site, key.step);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> factor(x.numel());
  for (std::size_t i = 0; i < factor.size(); ++i) factor[i] = rng.uniform(i) < rate ? T{0} : keep_scale;
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor[i];
  return make_result<T>(
      x.shape(), std::move(out), {x},
      [factor = std::move(factor)](TensorNode<T>& self) {
        auto gx = parent_grad(self, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * factor[i];
      },
      "dropout");
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const Index> labels) {
  if (logits.rank() != 2 || logits.extent(0) != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_to_string(logits.shape()) +
                         " vs " + std::to_string(labels.size()) + " labels");
  }
  const auto B = logits.extent(0);
  const auto V = logits.extent(1);
  if (B == 0) throw DimensionError("softmax_cross_entropy: empty batch");
  auto ld = logits.data();
  std::vector<T> probs(B * V);
  std::vector<Index> label_copy(labels.begin(), labels.end());
  T total{0};
  for (std::size_t r = 0; r < B; ++r) {
    const auto label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= V) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(label) +
                       " outside [0, " + std::to_string(V) + ")");
    }
    const T* row = ld.data() + r * V;
    const T peak = *std::max_element(row, row + V);
    T denom{0};
    for (std::size_t v = 0; v < V; ++v) {
      const T e = std::exp(row[v] - peak);
      probs[r * V + v] = e;
      denom += e;
    }
    for (std::size_t v = 0; v < V; ++v) probs[r * V + v] /= denom;
    total += std::log(denom) + peak - row[static_cast<std::size_t>(label)];
  }
  return make_result<T>(
      {}, {total / static_cast<T>(B)}, {logits},
      [B, V, probs = std::move(probs), label_copy = std::move(label_copy)](TensorNode<T>& self) {
        auto gl = parent_grad(self, 0);
        const T g = self.grad[0] / static_cast<T>(B);
        for (std::size_t r = 0; r < B; ++r) {
          for (std::size_t v = 0; v < V; ++v) gl[r * V + v] += g * probs[r * V + v];
          gl[r * V + static_cast<std::size_t>(label_copy[r])] -= g;
        }
      },
      "softmax_cross_entropy");
}

template <typename T>
Tensor<T> concat_last(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape l = p.shape();
    const auto w = l.back();
    l.pop_back();
    if (l != lead) {
      throw DimensionError("concat_last: leading shapes differ: " + shape_to_string(parts[0].shape()) +
                           " vs " + shape_to_string(p.shape()));
    }
    widths.push_back(w);
    total += w;
  }
  const auto rows = shape_numel(lead);
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pd = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pd.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_result<T>(
      std::move(shape), std::move(out), std::vector<Tensor<T>>(parts.begin(), parts.end()),
      [rows, total, widths](TensorNode<T>& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          auto gp = parent_grad(self, k);
          if (!gp.empty()) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[k]; ++c)
                gp[r * widths[k] + c] += self.grad[r * total + off + c];
          }
          off += widths[k];
        }
      },
      "concat_last");
}

template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const auto d = x.extent(-1);
  if (begin > end || end > d) {
    throw DimensionError("slice_last: [" + std::to_string(begin) + ":" + std::to_string(end) +
                         ") outside width " + std::to_string(d));
  }
  if (begin == 0 && end == d) return x;
  const auto w = end - begin;
  const auto rows = x.numel() / d;
  auto xd = x.data();
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xd.data() + r * d + begin, w, out.data() + r * w);
  Shape shape = x.shape();
  shape.back() = w;
  return make_result<T>(
      std::move(shape), std::move(out), {x},
      [rows, d, w, begin](TensorNode<T>& self) {
        auto gx = parent_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) gx[r * d + begin + c] += self.grad[r * w + c];
      },
      "slice_last");
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const auto n = x.extent(0);
  if (begin > end || end > n) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ":" + std::to_string(end) +
                         ") outside extent " + std::to_string(n));
  }
  if (begin == 0 && end == n) return x;
  const auto stride = x.numel() / n;
  auto xd = x.data();
  std::vector<T> out(xd.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                     xd.begin() + static_cast<std::ptrdiff_t>(end * stride));
  Shape shape = x.shape();
  shape[0] = end - begin;
  return make_result<T>(
      std::move(shape), std::move(out), {x},
      [offset = begin * stride](TensorNode<T>& self) {
        auto gx = parent_grad(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[offset + i] += self.grad[i];
      },
      "slice_rows");
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const Index> index, Shape index_shape) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be 2-D, got " + shape_to_string(table.shape()));
  if (shape_numel(index_shape) != index.size()) {
    throw DimensionError("gather_rows: index shape " + shape_to_string(index_shape) + " holds " +
                         std::to_string(shape_numel(index_shape)) + " entries, got " +
                         std::to_string(index.size()));
  }
  const auto V = table.extent(0);
  const auto D = table.extent(1);
  auto td = table.data();
  std::vector<T> out(index.size() * D, T{0});
  for (std::size_t r = 0; r < index.size(); ++r) {
    const auto id = index[r];
    if (id < 0) continue;
    if (static_cast<std::size_t>(id) >= V) {
      throw IndexError("gather_rows: row " + std::to_string(id) + " outside table of " +
                       std::to_string(V) + " rows");
    }
    std::copy_n(td.data() + static_cast<std::size_t>(id) * D, D, out.data() + r * D);
  }
  Shape shape = std::move(index_shape);
  shape.push_back(D);
  return make_result<T>(
      std::move(shape), std::move(out), {table},
      [D, ids = std::vector<Index>(index.begin(), index.end())](TensorNode<T>& self) {
        auto gt = parent_grad(self, 0);
        for (std::size_t r = 0; r < ids.size(); ++r) {
          if (ids[r] < 0) continue;
          T* dst = gt.data() + static_cast<std::size_t>(ids[r]) * D;
          const T* src = self.grad.data() + r * D;
          for (std::size_t c = 0; c < D; ++c) dst[c] += src[c];
        }
      },
      "gather_rows");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  return make_result<T>(
      std::move(shape), copy_of(x), {x},
      [](TensorNode<T>& self) {
        auto gx = parent_grad(self, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
      },
      "reshape");
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, std::span<const T> factors) {
  const auto d = x.extent(-1);
  const auto rows = x.numel() / d;
  if (factors.size() != rows) {
    throw DimensionError("scale_rows: " + std::to_string(factors.size()) + " factors for " +
                         std::to_string(rows) + " rows");
  }
  auto xd = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = xd[r * d + c] * factors[r];
  return make_result<T>(
      x.shape(), std::move(out), {x},
      [d, f = std::vector<T>(factors.begin(), factors.end())](TensorNode<T>& self) {
        auto gx = parent_grad(self, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * f[i / d];
      },
      "scale_rows");
}

template <typename T>
ComplexPair<T> complex_mul(const Tensor<T>& ar, const Tensor<T>& ai, const Tensor<T>& br,
                           const Tensor<T>& bi) {
  return {sub(mul(ar, br), mul(ai, bi)), add(mul(ar, bi), mul(ai, br))};
}

#define FMRLREC_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                \
  template Tensor<T> silu(const Tensor<T>&);                                                   \
  template Tensor<T> exp(const Tensor<T>&);                                                    \
  template Tensor<T> sin(const Tensor<T>&);                                                    \
  template Tensor<T> cos(const Tensor<T>&);                                                    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T,       \
                                std::span<const std::size_t>);                                 \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, DropoutKey);                      \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const Index>);          \
  template Tensor<T> concat_last(std::span<const Tensor<T>>);                                  \
  template Tensor<T> slice_last(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const Index>, Shape);             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> scale_rows(const Tensor<T>&, std::span<const T>);                         \
  template ComplexPair<T> complex_mul(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                      const Tensor<T>&);                                       \
  template void kernels::gemm_nn(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template void kernels::gemm_tn(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template std::vector<T> kernels::transpose(std::size_t, std::size_t, const T*);

FMRLREC_INSTANTIATE_OPS(float)
FMRLREC_INSTANTIATE_OPS(double)

#undef FMRLREC_INSTANTIATE_OPS

}  // namespace fmrlrec
