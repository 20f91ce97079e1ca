#include "cvrank/checkpoint.hpp"

#include "cvrank/binary_io.hpp"
#include "cvrank/error.hpp"

namespace cvrank::reranker {

namespace {

constexpr std::string_view kMagic = "GVCK";

void put_tensor_header(io::ByteWriter& w, const std::string& name, const std::vector<std::uint32_t>& dims) {
  w.put_u32(static_cast<std::uint32_t>(name.size()));
  w.put_bytes(name);
  w.put_u32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.put_u32(d);
}

std::vector<std::uint32_t> dims_of(const TensorRef<const float>& t) {
  if (t.rank == 0) return {};
  if (t.rank == 1) return {static_cast<std::uint32_t>(t.rows)};
  return {static_cast<std::uint32_t>(t.rows), static_cast<std::uint32_t>(t.cols)};
}

std::uint64_t element_count(const std::vector<std::uint32_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::string encode_checkpoint(const Params<float>& params, const std::vector<NamedTensor>& extra) {
  const auto& c = params.config;
  io::ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kCheckpointVersion);
  w.put_u32(c.image_dim);
  w.put_u32(c.text_dim);
  w.put_u32(c.latent_dim);
  w.put_u32(c.aligner_layers);
  w.put_u32(c.aligner_hidden);
  w.put_f64(c.ln_epsilon);
  w.put_u8(c.shared_projections ? 1 : 0);
  w.put_u64(c.init_seed);

  const auto tensors = params.tensors();
  w.put_u32(static_cast<std::uint32_t>(tensors.size() + extra.size()));
  for (const auto& t : tensors) {
    put_tensor_header(w, t.name, dims_of(t));
    // Row-major on disk; Eigen storage is column-major.
    for (Eigen::Index r = 0; r < t.rows; ++r) {
      for (Eigen::Index col = 0; col < t.cols; ++col) w.put_f32(t.data[col * t.rows + r]);
    }
  }
  for (const auto& t : extra) {
    if (element_count(t.dims) != t.values.size()) {
      throw ValidationError("checkpoint tensor '" + t.name + "' has a payload that does not match its dims");
    }
    put_tensor_header(w, t.name, t.dims);
    w.put_f32s(t.values);
  }
  return w.buffer();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  if (bytes.size() < kMagic.size() || r.get_bytes(kMagic.size()) != kMagic) {
    throw FormatError(what + ": bad magic (not a GVCK checkpoint)");
  }
  const auto version = r.get_u32();
  if (version != kCheckpointVersion) throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));

  RerankerConfig c;
  c.image_dim = r.get_u32();
  c.text_dim = r.get_u32();
  c.latent_dim = r.get_u32();
  c.aligner_layers = r.get_u32();
  c.aligner_hidden = r.get_u32();
  c.ln_epsilon = r.get_f64();
  c.shared_projections = r.get_u8() != 0;
  c.init_seed = r.get_u64();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw FormatError(what + ": invalid stored config: " + e.what());
  }

  Checkpoint ck;
  ck.params = Params<float>::zeros(c);
  auto tensors = ck.params.tensors();
  const auto count = r.get_u32();
  if (count < tensors.size()) throw FormatError(what + ": too few tensors for the stored config");

  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get_u32();
    t.name = std::string(r.get_bytes(name_len));
    const auto rank = r.get_u32();
    if (rank > 8) throw FormatError(what + ": tensor '" + t.name + "' has implausible rank");
    for (std::uint32_t d = 0; d < rank; ++d) t.dims.push_back(r.get_u32());
    const auto n = element_count(t.dims);
    if (n > r.remaining() / sizeof(float)) throw FormatError(what + ": truncated payload in tensor '" + t.name + "'");
    t.values.resize(n);
    r.get_f32s(t.values);

    if (i < tensors.size()) {
      auto& dst = tensors[i];
      std::vector<std::uint32_t> want;
      if (dst.rank >= 1) want.push_back(static_cast<std::uint32_t>(dst.rows));
      if (dst.rank == 2) want.push_back(static_cast<std::uint32_t>(dst.cols));
      if (t.name != dst.name || t.dims != want) {
        throw FormatError(what + ": tensor " + std::to_string(i) + " is '" + t.name + "', expected '" + dst.name +
                          "' with matching shape");
      }
      for (Eigen::Index row = 0; row < dst.rows; ++row) {
        for (Eigen::Index col = 0; col < dst.cols; ++col) {
          dst.data[col * dst.rows + row] = t.values[static_cast<std::size_t>(row * dst.cols + col)];
        }
      }
    } else {
      ck.extra.push_back(std::move(t));
    }
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after last tensor");
  return ck;
}

void write_checkpoint(const std::string& path, const Params<float>& params, const std::vector<NamedTensor>& extra) {
  io::write_file(path, encode_checkpoint(params, extra));
}

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path), path); }

}  // namespace cvrank::reranker
