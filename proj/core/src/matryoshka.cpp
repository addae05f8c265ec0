#include "fmrlrec/matryoshka.hpp"

#include <algorithm>
#include <sstream>

#include "fmrlrec/error.hpp"
#include "fmrlrec/rng.hpp"

namespace fmrlrec {

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t parse_size(const std::string& token) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(token, &pos);
  } catch (const std::exception&) {
    throw ParameterError("ladder: '" + token + "' is not a size");
  }
  if (pos != token.size()) throw ParameterError("ladder: '" + token + "' is not a size");
  return static_cast<std::size_t>(v);
}

}  // namespace

SizeLadder::SizeLadder(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.empty()) throw ParameterError("ladder: empty");
  for (std::size_t j = 0; j < sizes_.size(); ++j) {
    if (sizes_[j] < 2 || !is_power_of_two(sizes_[j])) {
      throw ParameterError("ladder: " + std::to_string(sizes_[j]) + " is not a power of two >= 2");
    }
    if (j > 0 && sizes_[j] != 2 * sizes_[j - 1]) {
      throw ParameterError("ladder: " + std::to_string(sizes_[j]) + " does not double " +
                           std::to_string(sizes_[j - 1]));
    }
  }
}

SizeLadder SizeLadder::doubling(std::size_t min_size, std::size_t max_size) {
  std::vector<std::size_t> sizes;
  for (std::size_t m = min_size; m <= max_size && m != 0; m *= 2) sizes.push_back(m);
  if (sizes.empty() || sizes.back() != max_size) {
    throw ParameterError("ladder: " + std::to_string(max_size) + " is not reachable by doubling " +
                         std::to_string(min_size));
  }
  return SizeLadder(std::move(sizes));
}

SizeLadder SizeLadder::parse(const std::string& text) {
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    return doubling(parse_size(text.substr(0, dots)), parse_size(text.substr(dots + 2)));
  }
  std::vector<std::size_t> sizes;
  std::stringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    token.erase(std::remove_if(token.begin(), token.end(), ::isspace), token.end());
    if (!token.empty()) sizes.push_back(parse_size(token));
  }
  return SizeLadder(std::move(sizes));
}

bool SizeLadder::contains(std::size_t m) const {
  return std::find(sizes_.begin(), sizes_.end(), m) != sizes_.end();
}

std::size_t SizeLadder::position(std::size_t m) const {
  const auto it = std::find(sizes_.begin(), sizes_.end(), m);
  if (it == sizes_.end()) {
    throw ParameterError("size " + std::to_string(m) + " is not in ladder {" + to_string() + "}");
  }
  return static_cast<std::size_t>(it - sizes_.begin());
}

SizeLadder SizeLadder::prefix_through(std::size_t m) const {
  const auto j = position(m);
  return SizeLadder(std::vector<std::size_t>(sizes_.begin(), sizes_.begin() + static_cast<std::ptrdiff_t>(j + 1)));
}

std::vector<std::size_t> SizeLadder::scaled_ends(std::size_t k) const {
  std::vector<std::size_t> ends(sizes_);
  for (auto& e : ends) e *= k;
  return ends;
}

std::string SizeLadder::to_string() const {
  std::string out;
  for (std::size_t j = 0; j < sizes_.size(); ++j) {
    if (j) out += ',';
    out += std::to_string(sizes_[j]);
  }
  return out;
}

std::string to_string(LinearCase kind) {
  switch (kind) {
    case LinearCase::up: return "up";
    case LinearCase::down: return "down";
    case LinearCase::square: return "square";
    case LinearCase::output_only: return "output_only";
  }
  return "?";
}

LinearCase parse_linear_case(const std::string& text) {
  if (text == "up") return LinearCase::up;
  if (text == "down") return LinearCase::down;
  if (text == "square") return LinearCase::square;
  if (text == "output_only") return LinearCase::output_only;
  throw ParameterError("unknown linear case '" + text + "'");
}

std::pair<std::size_t, std::size_t> case_extents(LinearCase kind, std::size_t width,
                                                 std::size_t scale_k, std::size_t fixed_in) {
  switch (kind) {
    case LinearCase::up: return {width, scale_k * width};
    case LinearCase::down: return {scale_k * width, width};
    case LinearCase::square: return {width, width};
    case LinearCase::output_only: return {fixed_in, width};
  }
  return {0, 0};
}

namespace {

std::size_t infer_k(std::size_t d1, std::size_t d2, LinearCase kind, const SizeLadder& ladder) {
  const auto D = ladder.max();
  auto fail = [&](const std::string& why) {
    return ConfigError("mask " + to_string(kind) + " " + std::to_string(d1) + "x" +
                       std::to_string(d2) + " with ladder max " + std::to_string(D) + ": " + why);
  };
  switch (kind) {
    case LinearCase::up:
      if (d1 != D || d2 % D != 0 || d2 < D) throw fail("expected D x kD");
      return d2 / D;
    case LinearCase::down:
      if (d2 != D || d1 % D != 0 || d1 < D) throw fail("expected kD x D");
      return d1 / D;
    case LinearCase::square:
      if (d1 != D || d2 != D) throw fail("expected D x D");
      return 1;
    case LinearCase::output_only:
      if (d2 != D) throw fail("expected output width D");
      return 1;
  }
  return 1;
}

}  // namespace

template <typename T>
Tensor<T> build_mask(std::size_t d1, std::size_t d2, LinearCase kind, const SizeLadder& ladder) {
  const auto k = infer_k(d1, d2, kind, ladder);
  if (kind == LinearCase::output_only) return Tensor<T>::full({d1, d2}, T{1});
  std::vector<T> mask(d1 * d2, T{0});
  for (std::size_t j = 0; j < ladder.count(); ++j) {
    const auto lo = ladder.chunk_begin(j);
    const auto hi = ladder[j];
    if (kind == LinearCase::down) {
      for (std::size_t r = 0; r < k * hi; ++r)
        for (std::size_t c = lo; c < hi; ++c) mask[r * d2 + c] = T{1};
    } else {
      for (std::size_t r = 0; r < hi; ++r)
        for (std::size_t c = k * lo; c < k * hi; ++c) mask[r * d2 + c] = T{1};
    }
  }
  return Tensor<T>::from_vector({d1, d2}, std::move(mask));
}

template <typename T>
MaskedLinear<T> make_masked_linear(std::size_t d_in, std::size_t d_out, LinearCase kind,
                                   std::size_t scale_k, const SizeLadder& ladder, bool with_bias,
                                   bool use_mask, double init_std, std::uint64_t seed,
                                   std::uint64_t site) {
  MaskedLinear<T> layer;
  layer.kind = kind;
  layer.scale_k = scale_k;
  layer.ladder = ladder;
  const CounterRng rng(seed, site);
  std::vector<T> w(d_in * d_out);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(init_std * rng.normal(i));
  if (use_mask) {
    layer.mask = build_mask<T>(d_in, d_out, kind, ladder);
    const auto m = layer.mask.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= m[i];
  } else {
    infer_k(d_in, d_out, kind, ladder);
  }
  layer.weight = Tensor<T>::from_vector({d_in, d_out}, std::move(w), true);
  if (with_bias) layer.bias = Tensor<T>::zeros({d_out}, true);
  return layer;
}

template <typename T>
Tensor<T> fmrlrec_apply(const MaskedLinear<T>& layer) {
  return layer.masked() ? mul(layer.weight, layer.mask) : layer.weight;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const MaskedLinear<T>& layer) {
  auto y = matmul(x, fmrlrec_apply(layer));
  return layer.bias.defined() ? add(y, layer.bias) : y;
}

template <typename T>
Tensor<T> chunked_forward_oracle(const Tensor<T>& x, const MaskedLinear<T>& layer) {
  const auto d_in = layer.in_features();
  const auto d_out = layer.out_features();
  if (x.extent(-1) != d_in) {
    throw DimensionError("chunked_forward_oracle: input " + shape_to_string(x.shape()) +
                         " vs weight " + shape_to_string(layer.weight.shape()));
  }
  const auto& ladder = layer.ladder;
  const auto k = layer.kind == LinearCase::square ? std::size_t{1} : layer.scale_k;
  const auto rows = x.numel() / d_in;
  auto xd = x.data();
  auto wd = layer.weight.data();

  // One slice product X^(j) W^(j) per chunk; outputs land side by side.
  std::vector<T> out(rows * d_out, T{0});
  for (std::size_t j = 0; j < ladder.count(); ++j) {
    const auto lo = ladder.chunk_begin(j);
    const auto hi = ladder[j];
    std::size_t in_end = 0, col_lo = 0, col_hi = 0;
    switch (layer.kind) {
      case LinearCase::up:
      case LinearCase::square:
        in_end = hi;
        col_lo = k * lo;
        col_hi = k * hi;
        break;
      case LinearCase::down:
        in_end = k * hi;
        col_lo = lo;
        col_hi = hi;
        break;
      case LinearCase::output_only:
        in_end = d_in;
        col_lo = lo;
        col_hi = hi;
        break;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = col_lo; c < col_hi; ++c) {
        T acc{0};
        for (std::size_t i = 0; i < in_end; ++i) acc += xd[r * d_in + i] * wd[i * d_out + c];
        out[r * d_out + c] = acc;
      }
    }
  }
  if (layer.bias.defined()) {
    auto bd = layer.bias.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < d_out; ++c) out[r * d_out + c] += bd[c];
  }
  Shape shape = x.shape();
  shape.back() = d_out;
  return Tensor<T>::from_vector(std::move(shape), std::move(out));
}

template <typename T>
MaskedLinear<T> slice_linear(const MaskedLinear<T>& layer, std::size_t m, bool detach) {
  const auto k = layer.scale_k;
  std::size_t rows = 0, cols = 0, bias_len = 0;
  switch (layer.kind) {
    case LinearCase::up:
      rows = m;
      cols = k * m;
      break;
    case LinearCase::down:
      rows = k * m;
      cols = m;
      break;
    case LinearCase::square:
      rows = m;
      cols = m;
      break;
    case LinearCase::output_only:
      rows = layer.in_features();
      cols = m;
      break;
  }
  bias_len = cols;
  MaskedLinear<T> out;
  out.kind = layer.kind;
  out.scale_k = layer.scale_k;
  out.ladder = layer.ladder.prefix_through(m);
  auto w = slice_last(slice_rows(fmrlrec_apply(layer), 0, rows), 0, cols);
  out.weight = detach ? w.detach(true) : w;
  if (layer.bias.defined()) {
    auto b = slice_last(layer.bias, 0, bias_len);
    out.bias = detach ? b.detach(true) : b;
  }
  return out;
}

#define FMRLREC_INSTANTIATE_MATRYOSHKA(T)                                                        \
  template Tensor<T> build_mask<T>(std::size_t, std::size_t, LinearCase, const SizeLadder&);     \
  template MaskedLinear<T> make_masked_linear<T>(std::size_t, std::size_t, LinearCase,          \
                                                 std::size_t, const SizeLadder&, bool, bool,    \
                                                 double, std::uint64_t, std::uint64_t);         \
  template Tensor<T> fmrlrec_apply(const MaskedLinear<T>&);                                     \
  template Tensor<T> linear_forward(const Tensor<T>&, const MaskedLinear<T>&);                  \
  template Tensor<T> chunked_forward_oracle(const Tensor<T>&, const MaskedLinear<T>&);          \
  template MaskedLinear<T> slice_linear(const MaskedLinear<T>&, std::size_t, bool);

FMRLREC_INSTANTIATE_MATRYOSHKA(float)
FMRLREC_INSTANTIATE_MATRYOSHKA(double)

#undef FMRLREC_INSTANTIATE_MATRYOSHKA

}  // namespace fmrlrec
