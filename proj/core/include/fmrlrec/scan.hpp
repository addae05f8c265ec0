#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace fmrlrec {

/// Work-efficient (up-sweep / down-sweep) inclusive prefix scan.
///
/// `op(earlier, later)` must be associative; it need not be commutative. The
/// tree has ceil(log2 n) levels and every combine within a level is
/// independent, so the evaluation order is fixed for a given n.
template <typename Elem, typename Op>
void associative_scan(std::vector<Elem>& xs, const Elem& identity, Op op) {
  const std::size_t n = xs.size();
  if (n <= 1) return;
  std::size_t p = 1;
  while (p < n) p *= 2;
  std::vector<Elem> tree(xs.begin(), xs.end());
  tree.resize(p, identity);

  for (std::size_t stride = 1; stride < p; stride *= 2) {
    for (std::size_t i = 2 * stride - 1; i < p; i += 2 * stride) {
      tree[i] = op(tree[i - stride], tree[i]);
    }
  }
  tree[p - 1] = identity;
  for (std::size_t stride = p / 2; stride >= 1; stride /= 2) {
    for (std::size_t i = 2 * stride - 1; i < p; i += 2 * stride) {
      Elem left = std::move(tree[i - stride]);
      tree[i - stride] = tree[i];
      tree[i] = op(tree[i], left);
    }
  }
  // tree now holds the exclusive scan.
  for (std::size_t k = 0; k < n; ++k) xs[k] = op(tree[k], xs[k]);
}

/// Plain complex value; avoids the NaN-recovery path of std::complex multiply.
template <typename T>
struct Complex {
  T re{};
  T im{};

  friend Complex operator*(Complex a, Complex b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
  }
  friend Complex operator+(Complex a, Complex b) { return {a.re + b.re, a.im + b.im}; }
  Complex conj() const { return {re, -im}; }
};

/// Element of the linear-recurrence scan: the affine map h -> a h + b.
template <typename T>
struct ScanElement {
  Complex<T> a{T{1}, T{0}};
  Complex<T> b{};
};

/// Composition "apply `first`, then `second`".
template <typename T>
ScanElement<T> scan_combine(const ScanElement<T>& first, const ScanElement<T>& second) {
  return {second.a * first.a, second.a * first.b + second.b};
}

}  // namespace fmrlrec
