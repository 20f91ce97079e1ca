#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cvrank/reranker.hpp"

namespace cvrank::reranker {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// A free-standing tensor in checkpoint framing; values are row-major.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  Params<float> params;
  // Tensors after the parameter block, e.g. optimizer state.
  std::vector<NamedTensor> extra;
};

// "GVCK", u32 version, serialized RerankerConfig, u32 tensor count, then per
// tensor: u32 name length, name bytes, u32 rank, u32 dims[rank], f32 payload.
std::string encode_checkpoint(const Params<float>& params, const std::vector<NamedTensor>& extra = {});
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what);

void write_checkpoint(const std::string& path, const Params<float>& params,
                      const std::vector<NamedTensor>& extra = {});
Checkpoint read_checkpoint(const std::string& path);

}  // namespace cvrank::reranker
