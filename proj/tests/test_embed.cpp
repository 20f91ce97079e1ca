#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cvrank/embed.hpp"
#include "cvrank/error.hpp"

using namespace cvrank;
using namespace cvrank::embed;
using geostore::Embedding;

namespace {

double dot(const Embedding& a, const Embedding& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

// Stand-alone rendition of the documented mock construction.
Embedding reference_mock(const std::string& text, std::uint32_t dim) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) h = (h ^ c) * 1099511628211ULL;
  std::uint64_t s = h ^ (std::uint64_t{dim} << 32);
  std::vector<long double> raw(dim);
  long double n2 = 0;
  for (auto& x : raw) {
    s += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    x = std::ldexp(static_cast<long double>(z >> 11), -52) - 1;
    n2 += x * x;
  }
  Embedding v(dim);
  for (std::uint32_t i = 0; i < dim; ++i) v[i] = static_cast<float>(raw[i] / std::sqrt(n2));
  return v;
}

// Loopback embedding service with a few scripted endpoints.
class FakeService {
 public:
  FakeService() {
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      record(req);
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& t : body.at("input")) rows.push_back(reference_mock(t.get<std::string>(), 4));
      res.set_content(nlohmann::json{{"embeddings", rows}}.dump(), "application/json");
    });
    server_.Post("/dim8", [this](const httplib::Request& req, httplib::Response& res) {
      record(req);
      const auto n = nlohmann::json::parse(req.body).at("input").size();
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < n; ++i) rows.push_back(std::vector<float>(8, 0.5f));
      res.set_content(nlohmann::json{{"embeddings", rows}}.dump(), "application/json");
    });
    server_.Post("/denied", [this](const httplib::Request& req, httplib::Response& res) {
      record(req);
      res.status = 401;
      res.set_content("invalid api key", "text/plain");
    });
    server_.Post("/flaky", [this](const httplib::Request& req, httplib::Response& res) {
      record(req);
      if (flaky_failures_.fetch_sub(1) > 0) {
        res.status = 503;
        res.set_content("busy", "text/plain");
        return;
      }
      const auto n = nlohmann::json::parse(req.body).at("input").size();
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < n; ++i) rows.push_back(std::vector<float>(4, 1.0f));
      res.set_content(nlohmann::json{{"embeddings", rows}}.dump(), "application/json");
    });
    server_.Post("/garbage", [this](const httplib::Request& req, httplib::Response& res) {
      record(req);
      res.set_content("{not json", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }
  int requests() const { return requests_; }
  std::string last_auth() {
    std::lock_guard lock(mu_);
    return last_auth_;
  }
  std::vector<std::size_t> batch_sizes() {
    std::lock_guard lock(mu_);
    return batch_sizes_;
  }
  std::string last_model() {
    std::lock_guard lock(mu_);
    return last_model_;
  }
  void fail_next(int n) { flaky_failures_ = n; }

 private:
  void record(const httplib::Request& req) {
    ++requests_;
    std::lock_guard lock(mu_);
    last_auth_ = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    batch_sizes_.push_back(body.at("input").size());
    last_model_ = body.at("model").get<std::string>();
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> flaky_failures_{0};
  std::mutex mu_;
  std::string last_auth_;
  std::string last_model_;
  std::vector<std::size_t> batch_sizes_;
};

EndpointConfig live(const std::string& url) {
  EndpointConfig e;
  e.url = url;
  e.dim = 4;
  e.backoff_ms = 1;
  e.timeout_seconds = 5;
  return e;
}

}  // namespace

TEST_CASE("mock embedding is deterministic and unit norm") {
  const auto a = mock_embedding("a dense urban block", 1536);
  const auto b = mock_embedding("a dense urban block", 1536);
  CHECK(a.size() == 1536);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
  CHECK(std::abs(std::sqrt(dot(a, a)) - 1.0) < 1e-6);
  CHECK(mock_embedding("", 16).size() == 16);
  CHECK_THROWS_AS(mock_embedding("x", 0), ValidationError);
}

TEST_CASE("mock embedding matches a stand-alone rendition of the construction") {
  for (const std::string text : {"", "a", "The image shows a urban area", "\xff\x01 bytes"}) {
    for (std::uint32_t dim : {1u, 7u, 64u, 1536u}) {
      const auto got = mock_embedding(text, dim);
      const auto want = reference_mock(text, dim);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("mock embeddings of 1000 distinct strings are far apart") {
  std::vector<Embedding> v;
  for (int i = 0; i < 1000; ++i) v.push_back(mock_embedding("description " + std::to_string(i), 1536));
  double worst = -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) worst = std::max(worst, dot(v[i], v[j]));
  }
  CHECK(worst < 0.5);
}

TEST_CASE("embed_texts in mock mode") {
  EndpointConfig e;
  e.dim = 32;
  const auto out = embed_texts({"x", "y", "x"}, e);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == out[2]);
  CHECK(out[0] != out[1]);
  CHECK(out[1] == mock_embedding("y", 32));
  e.url = "mock:anything";
  CHECK(is_mock(e));
  e.batch_size = 0;
  CHECK_THROWS_AS(embed_texts({"x"}, e), ValidationError);
}

TEST_CASE("live mode: batching, order, auth and model name") {
  FakeService svc;
  ::setenv(kTokenEnv, "sekret", 1);
  auto e = live(svc.url("/v1/embeddings"));
  e.batch_size = 3;
  e.model = "m-test";
  std::vector<std::string> texts;
  for (int i = 0; i < 8; ++i) texts.push_back("t" + std::to_string(i));
  const auto out = embed_texts(texts, e);
  ::unsetenv(kTokenEnv);
  REQUIRE(out.size() == 8);
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK(out[i] == reference_mock(texts[i], 4));
  CHECK(svc.batch_sizes() == std::vector<std::size_t>{3, 3, 2});
  CHECK(svc.last_auth() == "Bearer sekret");
  CHECK(svc.last_model() == "m-test");
}

TEST_CASE("live mode: dimension mismatch is reported") {
  FakeService svc;
  auto e = live(svc.url("/dim8"));
  e.dim = 1536;
  try {
    embed_texts({"a"}, e);
    FAIL("expected an error");
  } catch (const IoError& err) {
    CHECK(std::string(err.what()).find("returned 8, configured text_dim is 1536") != std::string::npos);
  }
}

TEST_CASE("live mode: non-success status surfaces the body without retrying") {
  FakeService svc;
  try {
    embed_texts({"a"}, live(svc.url("/denied")));
    FAIL("expected an error");
  } catch (const IoError& err) {
    const std::string msg = err.what();
    CHECK(msg.find("401") != std::string::npos);
    CHECK(msg.find("invalid api key") != std::string::npos);
  }
  CHECK(svc.requests() == 1);
}

TEST_CASE("live mode: transient failures are retried with a bound") {
  FakeService svc;
  auto e = live(svc.url("/flaky"));
  svc.fail_next(2);
  CHECK(embed_texts({"a", "b"}, e).size() == 2);
  CHECK(svc.requests() == 3);

  svc.fail_next(100);
  e.max_attempts = 3;
  try {
    embed_texts({"a"}, e);
    FAIL("expected an error");
  } catch (const IoError& err) {
    const std::string msg = err.what();
    CHECK(msg.find("after 3 attempts") != std::string::npos);
    CHECK(msg.find("busy") != std::string::npos);
  }
  CHECK(svc.requests() == 6);
}

TEST_CASE("live mode: malformed responses and unreachable hosts") {
  FakeService svc;
  CHECK_THROWS_AS(embed_texts({"a"}, live(svc.url("/garbage"))), IoError);

  // Grab a free port, then close it so nothing listens there.
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto e = live("http://127.0.0.1:" + std::to_string(port) + "/v1/embeddings");
  e.max_attempts = 2;
  e.timeout_seconds = 1;
  try {
    embed_texts({"a"}, e);
    FAIL("expected an error");
  } catch (const IoError& err) {
    CHECK(std::string(err.what()).find("unreachable after 2 attempts") != std::string::npos);
  }
  CHECK_THROWS_AS(embed_texts({"a"}, live("ftp://example.invalid/x")), ValidationError);
}
