#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cvrank/geostore.hpp"

namespace cvrank::embed {

inline constexpr const char* kTokenEnv = "GEOVLM_EMBED_TOKEN";

struct EndpointConfig {
  // "mock:" (any suffix) selects the offline embedder; otherwise http(s)://host[:port]/path.
  std::string url = "mock:";
  std::string model = "text-embedding-3-small";
  std::uint32_t dim = 1536;
  std::size_t batch_size = 64;
  int max_attempts = 4;
  int backoff_ms = 250;  // doubled per retry, capped at 8x
  int timeout_seconds = 30;
};

bool is_mock(const EndpointConfig& endpoint);

// Unit-norm vector seeded by a 64-bit FNV-1a hash of the text. Integer-only
// generation plus a double-precision normalization, so results do not depend
// on the platform's libm.
geostore::Embedding mock_embedding(std::string_view text, std::uint32_t dim);

// One vector per text, in input order. Live mode POSTs
// {"input": [...], "model": ...} and expects {"embeddings": [[...], ...]}.
// Unreachable endpoints, non-success statuses and shape errors throw IoError.
std::vector<geostore::Embedding> embed_texts(const std::vector<std::string>& texts, const EndpointConfig& endpoint);

}  // namespace cvrank::embed
