#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "cvrank/embed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cvrank/error.hpp"

namespace cvrank::embed {

bool is_mock(const EndpointConfig& endpoint) { return endpoint.url.starts_with("mock:"); }

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || (!url.starts_with("http://") && !url.starts_with("https://"))) {
    throw ValidationError("embed endpoint must be http(s)://... or mock:, got '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool transient(int status) { return status == 408 || status == 429 || status >= 500; }

std::vector<geostore::Embedding> post_batch(httplib::Client& client, const ParsedUrl& url,
                                            const std::vector<std::string>& texts, const EndpointConfig& endpoint) {
  const nlohmann::json body{{"input", texts}, {"model", endpoint.model}};
  const auto payload = body.dump();
  std::string last_error;
  for (int attempt = 1; attempt <= endpoint.max_attempts; ++attempt) {
    if (attempt > 1) {
      const int factor = std::min(1 << (attempt - 2), 8);
      std::this_thread::sleep_for(std::chrono::milliseconds(endpoint.backoff_ms * factor));
    }
    auto res = client.Post(url.path, payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      if (transient(res->status)) continue;
      throw IoError("embedding service returned " + last_error);
    }
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(std::string("embedding service returned malformed JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("embeddings") || !doc["embeddings"].is_array()) {
      throw IoError("embedding service response lacks an \"embeddings\" array");
    }
    const auto& rows = doc["embeddings"];
    if (rows.size() != texts.size()) {
      throw IoError("embedding service returned " + std::to_string(rows.size()) + " vectors for " +
                    std::to_string(texts.size()) + " texts");
    }
    std::vector<geostore::Embedding> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      geostore::Embedding v;
      try {
        v = rows[i].get<geostore::Embedding>();
      } catch (const nlohmann::json::exception& e) {
        throw IoError("embedding " + std::to_string(i) + " is not a numeric array: " + e.what());
      }
      if (v.size() != endpoint.dim) {
        throw IoError("embedding dimension mismatch: service returned " + std::to_string(v.size()) +
                      ", configured text_dim is " + std::to_string(endpoint.dim));
      }
      for (float x : v) {
        if (!std::isfinite(x)) throw IoError("embedding " + std::to_string(i) + " has a non-finite value");
      }
      out.push_back(std::move(v));
    }
    return out;
  }
  throw IoError("embedding service " + endpoint.url + " unreachable after " + std::to_string(endpoint.max_attempts) +
                " attempts: " + last_error);
}

}  // namespace

geostore::Embedding mock_embedding(std::string_view text, std::uint32_t dim) {
  if (dim == 0) throw ValidationError("mock embedding: dim must be positive");
  std::uint64_t state = fnv1a(text) ^ (static_cast<std::uint64_t>(dim) << 32);
  std::vector<double> raw(dim);
  double norm2 = 0.0;
  for (auto& x : raw) {
    // Uniform in [-1, 1) from the top 53 bits.
    x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  geostore::Embedding v(dim);
  for (std::uint32_t i = 0; i < dim; ++i) v[i] = static_cast<float>(raw[i] * inv);
  return v;
}

std::vector<geostore::Embedding> embed_texts(const std::vector<std::string>& texts, const EndpointConfig& endpoint) {
  if (endpoint.dim == 0) throw ValidationError("embed: dim must be positive");
  if (endpoint.batch_size == 0) throw ValidationError("embed: batch_size must be positive");
  if (endpoint.max_attempts < 1) throw ValidationError("embed: max_attempts must be >= 1");
  std::vector<geostore::Embedding> out;
  out.reserve(texts.size());
  if (is_mock(endpoint)) {
    for (const auto& t : texts) out.push_back(mock_embedding(t, endpoint.dim));
    return out;
  }

  const auto url = parse_url(endpoint.url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(endpoint.timeout_seconds, 0);
  client.set_read_timeout(endpoint.timeout_seconds, 0);
  if (const char* token = std::getenv(kTokenEnv); token && *token) client.set_bearer_token_auth(token);

  for (std::size_t begin = 0; begin < texts.size(); begin += endpoint.batch_size) {
    const auto end = std::min(texts.size(), begin + endpoint.batch_size);
    const std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(begin),
                                         texts.begin() + static_cast<std::ptrdiff_t>(end));
    auto vectors = post_batch(client, url, batch, endpoint);
    for (auto& v : vectors) out.push_back(std::move(v));
  }
  return out;
}

}  // namespace cvrank::embed
