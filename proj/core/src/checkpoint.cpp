#include "fmrlrec/checkpoint.hpp"

#include <cstring>

#include "fmrlrec/binary_io.hpp"
#include "fmrlrec/error.hpp"

namespace fmrlrec {

namespace {

constexpr char kMagic[4] = {'F', 'M', 'R', 'C'};

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else return DType::u64;
}

template <typename T>
constexpr int precision_bits() {
  return std::is_same_v<T, float> ? 32 : 64;
}

}  // namespace

template <typename T>
Blob Blob::from_values(std::string name, Shape shape, std::span<const T> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("blob '" + name + "': shape " + shape_to_string(shape) + " vs " +
                         std::to_string(values.size()) + " values");
  }
  Blob b;
  b.name = std::move(name);
  b.dtype = dtype_of<T>();
  b.shape = std::move(shape);
  binary::Writer w;
  w.put_array<T>(values);
  b.bytes = std::move(w.bytes());
  return b;
}

template <typename T>
std::vector<T> Blob::values() const {
  binary::Reader r(bytes, "blob '" + name + "'");
  const auto n = shape_numel(shape);
  if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (dtype != DType::u64) throw FormatError("blob '" + name + "' is not an integer array");
    return r.get_array<std::uint64_t>(n);
  } else {
    if (dtype == DType::f32) {
      const auto v = r.get_array<float>(n);
      return {v.begin(), v.end()};
    }
    if (dtype == DType::f64) {
      const auto v = r.get_array<double>(n);
      return {v.begin(), v.end()};
    }
    throw FormatError("blob '" + name + "' is not a floating-point array");
  }
}

template Blob Blob::from_values(std::string, Shape, std::span<const float>);
template Blob Blob::from_values(std::string, Shape, std::span<const double>);
template Blob Blob::from_values(std::string, Shape, std::span<const std::uint64_t>);
template std::vector<float> Blob::values() const;
template std::vector<double> Blob::values() const;
template std::vector<std::uint64_t> Blob::values() const;

const Blob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const Blob& Checkpoint::get(const std::string& name) const {
  if (const auto* b = find(name)) return *b;
  throw FormatError("checkpoint has no blob '" + name + "'");
}

void Checkpoint::put(Blob blob) {
  for (auto& b : blobs) {
    if (b.name == blob.name) {
      b = std::move(blob);
      return;
    }
  }
  blobs.push_back(std::move(blob));
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  binary::Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(ckpt.manifest.to_string());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& b : ckpt.blobs) {
    if (b.bytes.size() != shape_numel(b.shape) * dtype_size(b.dtype)) {
      throw DimensionError("blob '" + b.name + "' size does not match its shape");
    }
    w.put_string(b.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(b.dtype));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(b.shape.size()));
    for (auto e : b.shape) w.put<std::uint64_t>(e);
    w.put<std::uint64_t>(b.bytes.size());
    w.put_bytes(b.bytes.data(), b.bytes.size());
  }
  w.put<std::uint64_t>(binary::byte_sum(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(origin + ": not a checkpoint (expected magic 'FMRC')");
  }
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 7; i >= 0; --i) stored = (stored << 8) | bytes[bytes.size() - 8 + static_cast<std::size_t>(i)];
  const auto computed = binary::byte_sum(body);
  if (stored != computed) {
    throw FormatError(origin + ": checksum mismatch (stored " + std::to_string(stored) + ", computed " +
                      std::to_string(computed) + ")");
  }
  binary::Reader r(body, origin);
  r.get<std::uint32_t>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(origin + ": checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.manifest = KeyValues::parse(r.get_string(), origin + " manifest");
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob b;
    b.name = r.get_string(4096);
    const auto dt = r.get<std::uint8_t>();
    if (dt < 1 || dt > 3) throw FormatError(origin + ": blob '" + b.name + "' has unknown dtype " + std::to_string(dt));
    b.dtype = static_cast<DType>(dt);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError(origin + ": blob '" + b.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) b.shape.push_back(r.get<std::uint64_t>());
    const auto len = r.get<std::uint64_t>();
    if (len != shape_numel(b.shape) * dtype_size(b.dtype)) {
      throw FormatError(origin + ": blob '" + b.name + "' holds " + std::to_string(len) + " bytes, shape " +
                        shape_to_string(b.shape) + " needs " + std::to_string(shape_numel(b.shape) * dtype_size(b.dtype)));
    }
    b.bytes = r.get_array<std::uint8_t>(len);
    ckpt.blobs.push_back(std::move(b));
  }
  if (r.remaining() != 0) throw FormatError(origin + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  binary::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::string& path) {
  const auto bytes = binary::read_file(path);
  return decode_checkpoint(bytes, path);
}

void write_model_config(KeyValues& out, const ModelConfig& c) {
  out.set("model.width", std::uint64_t{c.width});
  out.set("model.ladder", c.ladder.to_string());
  out.set("model.blocks", std::uint64_t{c.blocks});
  out.set("model.ffn_k", std::uint64_t{c.ffn_k});
  out.set("model.norm_mode", to_string(c.norm_mode));
  out.set("model.modality_mode", to_string(c.modality_mode));
  out.set("model.r_min", c.r_min);
  out.set("model.r_max", c.r_max);
  out.set("model.input_norm", c.input_norm);
  out.set("model.use_masks", c.use_masks);
  out.set("model.dropout", c.dropout);
  out.set("model.ln_eps", c.ln_eps);
  out.set("model.seed", c.seed);
  out.set("model.num_items", std::uint64_t{c.num_items});
  out.set("model.lang_dim", std::uint64_t{c.lang_dim});
  out.set("model.image_dim", std::uint64_t{c.image_dim});
}

ModelConfig read_model_config(const KeyValues& in) {
  ModelConfig c;
  c.width = in.get_uint("model.width", 0);
  c.ladder = SizeLadder::parse(in.get("model.ladder"));
  c.blocks = in.get_uint("model.blocks", c.blocks);
  c.ffn_k = in.get_uint("model.ffn_k", c.ffn_k);
  c.norm_mode = parse_norm_mode(in.get_string("model.norm_mode", "segment"));
  c.modality_mode = parse_modality_mode(in.get_string("model.modality_mode", "both"));
  c.r_min = in.get_double("model.r_min", c.r_min);
  c.r_max = in.get_double("model.r_max", c.r_max);
  c.input_norm = in.get_bool("model.input_norm", c.input_norm);
  c.use_masks = in.get_bool("model.use_masks", c.use_masks);
  c.dropout = in.get_double("model.dropout", c.dropout);
  c.ln_eps = in.get_double("model.ln_eps", c.ln_eps);
  c.seed = in.get_uint("model.seed", c.seed);
  c.num_items = in.get_uint("model.num_items", 0);
  c.lang_dim = in.get_uint("model.lang_dim", 0);
  c.image_dim = in.get_uint("model.image_dim", 0);
  return c;
}

template <typename T>
Checkpoint model_checkpoint(const ModelParams<T>& model, std::size_t extracted_size) {
  Checkpoint ckpt;
  auto& m = ckpt.manifest;
  m.set("format", "fmrlrec-checkpoint");
  m.set("version", std::uint64_t{kCheckpointVersion});
  m.set("precision", precision_bits<T>());
  write_model_config(m, model.config);
  m.set("ladder", model.config.ladder.to_string());
  m.set("extracted_size", std::uint64_t{extracted_size});
  for (const auto& p : named_parameters(model)) {
    ckpt.put(Blob::from_values<T>("param." + p.name, p.tensor.shape(), p.tensor.data()));
  }
  if (model.fusion_input.defined()) {
    ckpt.put(Blob::from_values<T>("buffer.fusion_input", model.fusion_input.shape(), model.fusion_input.data()));
  }
  return ckpt;
}

template <typename T>
ModelParams<T> load_model(const Checkpoint& ckpt) {
  if (ckpt.manifest.get_string("format", "") != "fmrlrec-checkpoint") {
    throw FormatError("not a model checkpoint (manifest format key missing or wrong)");
  }
  const auto config = read_model_config(ckpt.manifest);
  Tensor<T> fusion;
  if (const auto* b = ckpt.find("buffer.fusion_input")) fusion = Tensor<T>::from_vector(b->shape, b->template values<T>());
  auto model = build_model_from_fusion<T>(config, fusion);
  for (auto& p : named_parameters(model)) {
    const auto& b = ckpt.get("param." + p.name);
    if (b.shape != p.tensor.shape()) {
      throw FormatError("parameter '" + p.name + "': checkpoint shape " + shape_to_string(b.shape) +
                        ", model expects " + shape_to_string(p.tensor.shape()));
    }
    const auto v = b.template values<T>();
    std::copy(v.begin(), v.end(), p.tensor.mutable_data().begin());
  }
  return model;
}

template <typename T>
void save_optimizer(Checkpoint& ckpt, AdamW<T>& opt) {
  const auto& params = opt.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    ckpt.put(Blob::from_values<T>("adam.m." + params[k].name, params[k].tensor.shape(), opt.first_moments()[k]));
    ckpt.put(Blob::from_values<T>("adam.v." + params[k].name, params[k].tensor.shape(), opt.second_moments()[k]));
  }
  const std::uint64_t t = opt.steps();
  ckpt.put(Blob::from_values<std::uint64_t>("adam.step", {1}, std::span<const std::uint64_t>(&t, 1)));
}

template <typename T>
void load_optimizer(const Checkpoint& ckpt, AdamW<T>& opt) {
  const auto& params = opt.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& bm = ckpt.get("adam.m." + params[k].name);
    const auto& bv = ckpt.get("adam.v." + params[k].name);
    if (bm.shape != params[k].tensor.shape() || bv.shape != params[k].tensor.shape()) {
      throw FormatError("optimizer state for '" + params[k].name + "' has the wrong shape");
    }
    opt.first_moments()[k] = bm.template values<T>();
    opt.second_moments()[k] = bv.template values<T>();
  }
  opt.set_steps(ckpt.get("adam.step").values<std::uint64_t>().at(0));
}

#define FMRLREC_INSTANTIATE_CHECKPOINT(T)                                      \
  template Checkpoint model_checkpoint(const ModelParams<T>&, std::size_t);    \
  template ModelParams<T> load_model(const Checkpoint&);                       \
  template void save_optimizer(Checkpoint&, AdamW<T>&);                        \
  template void load_optimizer(const Checkpoint&, AdamW<T>&);

FMRLREC_INSTANTIATE_CHECKPOINT(float)
FMRLREC_INSTANTIATE_CHECKPOINT(double)

#undef FMRLREC_INSTANTIATE_CHECKPOINT

}  // namespace fmrlrec
