#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>

#include "cvrank/binary_io.hpp"
#include "cvrank/digest.hpp"
#include "cvrank/error.hpp"
#include "cvrank/geostore.hpp"
#include "cvrank/retriever.hpp"
#include "cvrank/synth.hpp"
#include "support.hpp"

using namespace cvrank;
using namespace cvrank::geostore;
using cvrank::testing::TempDir;

namespace {

void write_text(const std::string& path, const std::string& body) {
  std::ofstream(path, std::ios::binary) << body;
}

struct Fixture {
  TempDir dir;
  IngestSources src;
  StoreManifest manifest;

  Fixture() {
    write_text(dir / "refs.jsonl",
               "{\"id\":\"r1\",\"image\":[1,0,0,0],\"text\":[1,0]}\n"
               "{\"id\":\"r2\",\"image\":[0,1,0,0],\"text\":[0,1]}\n"
               "{\"id\":\"r3\",\"image\":[0,0,1,0.5]}\n");
    write_text(dir / "refs.captions.jsonl",
               "{\"id\":\"r1\",\"caption\":\"a park\"}\n{\"id\":\"r2\",\"caption\":\"a road\"}\n"
               "{\"id\":\"r3\",\"caption\":\"a lake\"}\n");
    write_text(dir / "refs.coords.jsonl",
               "{\"id\":\"r1\",\"lat\":51.24,\"lon\":-0.59}\n{\"id\":\"r2\",\"lat\":51.25,\"lon\":-0.58}\n"
               "{\"id\":\"r3\",\"lat\":51.26,\"lon\":-0.57}\n");
    write_text(dir / "queries.jsonl",
               "{\"id\":\"q1\",\"image\":[0.9,0.1,0,0],\"text\":[1,0.1],\"ground_truth\":[\"r1\"]}\n"
               "{\"id\":\"q2\",\"image\":[0.1,0.9,0,0],\"ground_truth\":[\"r2\",\"r3\"]}\n");
    src.references = {dir / "refs.jsonl", dir / "refs.captions.jsonl", dir / "refs.coords.jsonl"};
    src.queries = {dir / "queries.jsonl", "", ""};
    manifest.image_dim = 4;
    manifest.text_dim = 2;
    manifest.reference_count = 3;
    manifest.query_count = 2;
  }
};

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("ingest preserves the reference count and record fields") {
  Fixture f;
  const auto store = ingest(f.src, f.manifest);
  CHECK(store.references().size() == 3);
  CHECK(store.manifest().reference_count == 3);
  CHECK(store.reference("r1").caption == std::optional<std::string>("a park"));
  CHECK(store.reference("r3").text_emb == std::nullopt);
  CHECK(store.reference("r2").coord->lat == 51.25);
  CHECK(store.query("q2").ground_truth == std::vector<std::string>{"r2", "r3"});
}

TEST_CASE("ingest reports a dimension mismatch with file, line and id") {
  Fixture f;
  write_text(f.dir / "refs.jsonl",
             "{\"id\":\"r1\",\"image\":[1,0,0,0]}\n{\"id\":\"r2\",\"image\":[0,1,0,0,7]}\n"
             "{\"id\":\"r3\",\"image\":[0,0,1,0]}\n");
  const auto msg = error_of([&] { ingest(f.src, f.manifest); });
  CHECK(contains(msg, "r2"));
  CHECK(contains(msg, "refs.jsonl:2"));
  CHECK_THROWS_AS(ingest(f.src, f.manifest), ValidationError);
}

TEST_CASE("ingest rejects duplicate ids, dangling ground truth and malformed rows") {
  SUBCASE("duplicate id") {
    Fixture f;
    write_text(f.dir / "refs.jsonl",
               "{\"id\":\"r1\",\"image\":[1,0,0,0]}\n{\"id\":\"r1\",\"image\":[0,1,0,0]}\n"
               "{\"id\":\"r3\",\"image\":[0,0,1,0]}\n");
    const auto msg = error_of([&] { ingest(f.src, f.manifest); });
    CHECK(contains(msg, "r1"));
    CHECK(contains(msg, "duplicate"));
  }
  SUBCASE("unresolvable ground truth") {
    Fixture f;
    write_text(f.dir / "queries.jsonl",
               "{\"id\":\"q1\",\"image\":[1,0,0,0],\"ground_truth\":[\"r1\"]}\n"
               "{\"id\":\"q2\",\"image\":[0,1,0,0],\"ground_truth\":[\"nowhere\"]}\n");
    const auto msg = error_of([&] { ingest(f.src, f.manifest); });
    CHECK(contains(msg, "q2"));
    CHECK(contains(msg, "nowhere"));
  }
  SUBCASE("malformed row") {
    Fixture f;
    write_text(f.dir / "refs.jsonl", "{\"id\":\"r1\",\"image\":[1,0,0,0]}\n{\"id\":\"r2\",\"image\":\n");
    const auto msg = error_of([&] { ingest(f.src, f.manifest); });
    CHECK(contains(msg, "refs.jsonl:2"));
  }
  SUBCASE("count disagrees with manifest") {
    Fixture f;
    f.manifest.reference_count = 4;
    CHECK_THROWS_AS(ingest(f.src, f.manifest), ValidationError);
  }
  SUBCASE("zero-norm reference image") {
    Fixture f;
    write_text(f.dir / "refs.jsonl",
               "{\"id\":\"r1\",\"image\":[1,0,0,0]}\n{\"id\":\"r2\",\"image\":[0,0,0,0]}\n"
               "{\"id\":\"r3\",\"image\":[0,0,1,0]}\n");
    CHECK(contains(error_of([&] { ingest(f.src, f.manifest); }), "r2"));
  }
  SUBCASE("coordinate out of range") {
    Fixture f;
    write_text(f.dir / "refs.coords.jsonl", "{\"id\":\"r1\",\"lat\":91.0,\"lon\":0}\n");
    CHECK(contains(error_of([&] { ingest(f.src, f.manifest); }), "r1"));
  }
  SUBCASE("non-finite value") {
    Fixture f;
    write_text(f.dir / "refs.jsonl",
               "{\"id\":\"r1\",\"image\":[1,0,0,0]}\n{\"id\":\"r2\",\"image\":[0,1e999,0,0]}\n"
               "{\"id\":\"r3\",\"image\":[0,0,1,0]}\n");
    CHECK_THROWS(ingest(f.src, f.manifest));
  }
}

TEST_CASE("re-ingesting identical inputs yields an identical store digest") {
  Fixture f;
  ingest_to(f.src, f.manifest, f.dir / "store_a");
  ingest_to(f.src, f.manifest, f.dir / "store_b");
  const auto a = directory_digest(f.dir / "store_a");
  CHECK(a == directory_digest(f.dir / "store_b"));
  CHECK(a.size() == 64);
  // Any content change must move the digest.
  write_text(f.dir / "refs.captions.jsonl", "{\"id\":\"r1\",\"caption\":\"a pond\"}\n");
  ingest_to(f.src, f.manifest, f.dir / "store_c");
  CHECK(a != directory_digest(f.dir / "store_c"));
}

TEST_CASE("store round trip reproduces every record bit-exactly") {
  TempDir dir;
  SynthConfig c;
  c.n_locations = 40;
  c.semi_positives_per_location = 1;
  auto data = generate_synthetic(c, 3);
  data.store.set_text(Side::kReference, "r00001", "caption with \"quotes\"\nand a newline", *data.store.reference("r00001").text_emb);
  save_store(data.store, dir / "s");
  const auto loaded = load_store(dir / "s");
  CHECK(loaded == data.store);
  CHECK(loaded.reference("r00001").caption == data.store.reference("r00001").caption);
}

TEST_CASE("manifest text round trip and rejection of unknown keys") {
  StoreManifest m{8, 6, 10, 3, 1};
  CHECK(parse_manifest(manifest_to_text(m), "m") == m);
  CHECK_THROWS_AS(parse_manifest("image_dim=8\ntext_dim=6\nreference_count=1\nquery_count=1\nformat_version=1\ncolour=red\n", "m"),
                  ValidationError);
}

TEST_CASE("embedding matrix round trip is bit-exact for 100 random vectors") {
  TempDir dir;
  std::mt19937_64 rng(11);
  std::normal_distribution<float> normal(0.0f, 3.0f);
  std::vector<Embedding> rows(100, Embedding(17));
  for (auto& r : rows) {
    for (auto& x : r) x = normal(rng);
  }
  rows[5][3] = -0.0f;
  rows[6][0] = std::numeric_limits<float>::denorm_min();
  write_embedding_matrix(dir / "m.gvlm", rows, 17);
  const auto back = read_embedding_matrix(dir / "m.gvlm");
  REQUIRE(back.rows.size() == 100);
  CHECK(back.dim == 17);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(std::memcmp(rows[i].data(), back.rows[i].data(), 17 * sizeof(float)) == 0);
  }
  // Layout: magic, version, dim, count, payload.
  const auto bytes = io::read_file(dir / "m.gvlm");
  CHECK(bytes.size() == 4 + 4 + 4 + 8 + 100 * 17 * 4);
  CHECK(bytes.substr(0, 4) == "GVLM");
}

TEST_CASE("empty embedding matrix is a valid file") {
  TempDir dir;
  write_embedding_matrix(dir / "e.gvlm", {}, 4);
  const auto back = read_embedding_matrix(dir / "e.gvlm");
  CHECK(back.rows.empty());
  CHECK(back.dim == 4);
}

TEST_CASE("corrupted embedding matrices are rejected") {
  std::vector<Embedding> rows{{1, 2, 3}, {4, 5, 6}};
  const auto bytes = encode_embedding_matrix(rows, 3);
  SUBCASE("truncated by one byte") {
    const auto msg = error_of([&] { decode_embedding_matrix(bytes.substr(0, bytes.size() - 1), "t"); });
    CHECK(contains(msg, "truncated"));
    CHECK_THROWS_AS(decode_embedding_matrix(bytes.substr(0, bytes.size() - 1), "t"), FormatError);
  }
  SUBCASE("truncated inside the header") {
    CHECK_THROWS_AS(decode_embedding_matrix(bytes.substr(0, 10), "t"), FormatError);
  }
  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK(contains(error_of([&] { decode_embedding_matrix(bad, "t"); }), "magic"));
  }
  SUBCASE("version mismatch") {
    auto bad = bytes;
    bad[4] = 2;
    CHECK(contains(error_of([&] { decode_embedding_matrix(bad, "t"); }), "version"));
  }
  SUBCASE("trailing bytes") {
    CHECK_THROWS_AS(decode_embedding_matrix(bytes + "x", "t"), FormatError);
  }
  SUBCASE("rows must share the declared dim") {
    std::vector<Embedding> ragged{{1, 2, 3}, {4, 5}};
    CHECK_THROWS_AS(encode_embedding_matrix(ragged, 3), ValidationError);
  }
}

namespace {

Store pool_store(std::size_t n_refs, const std::vector<std::string>& positives) {
  std::vector<ReferenceRecord> refs;
  for (std::size_t i = 0; i < n_refs; ++i) {
    ReferenceRecord r;
    r.id = "r" + std::to_string(100 + i);
    r.image_emb = {1.0f, static_cast<float>(i)};
    refs.push_back(r);
  }
  QueryRecord q;
  q.id = "q";
  q.image_emb = {1.0f, 0.0f};
  q.ground_truth = positives;
  return Store(2, 2, std::move(refs), {q});
}

}  // namespace

TEST_CASE("build_eval_instances yields one single-positive instance per ground-truth id") {
  SUBCASE("three positives in a pool of fifty") {
    const auto store = pool_store(50, {"r100", "r120", "r149"});
    const auto inst = build_eval_instances(store.query("q"), store);
    REQUIRE(inst.size() == 3);
    std::set<std::string> positives;
    for (const auto& i : inst) {
      CHECK(i.candidate_pool.size() == 48);
      CHECK(std::is_sorted(i.candidate_pool.begin(), i.candidate_pool.end()));
      CHECK(std::count(i.candidate_pool.begin(), i.candidate_pool.end(), i.positive_id) == 1);
      std::size_t n_pos = 0;
      for (const auto& id : i.candidate_pool) n_pos += (id == "r100" || id == "r120" || id == "r149") ? 1 : 0;
      CHECK(n_pos == 1);
      positives.insert(i.positive_id);
    }
    CHECK(positives == std::set<std::string>{"r100", "r120", "r149"});
  }
  SUBCASE("a single positive gives the plain setup") {
    const auto store = pool_store(10, {"r104"});
    const auto inst = build_eval_instances(store.query("q"), store);
    REQUIRE(inst.size() == 1);
    CHECK(inst[0].positive_id == "r104");
    CHECK(inst[0].candidate_pool.size() == 10);
  }
  SUBCASE("an empty ground-truth set is an error") {
    const auto store = pool_store(3, {"r100"});
    QueryRecord q = store.query("q");
    q.ground_truth.clear();
    CHECK_THROWS_AS(build_eval_instances(q, store), ValidationError);
  }
}

TEST_CASE("synthetic generation is deterministic per seed") {
  TempDir dir;
  SynthConfig c;
  c.n_locations = 100;
  save_store(generate_synthetic(c, 7).store, dir / "a");
  save_store(generate_synthetic(c, 7).store, dir / "b");
  save_store(generate_synthetic(c, 8).store, dir / "c");
  CHECK(directory_digest(dir / "a") == directory_digest(dir / "b"));
  CHECK(directory_digest(dir / "a") != directory_digest(dir / "c"));
}

TEST_CASE("synthetic configuration errors") {
  SynthConfig c;
  c.n_locations = 3;
  c.group_size = 4;
  CHECK_THROWS_AS(generate_synthetic(c, 1), ValidationError);
  c.group_size = 1;
  CHECK_THROWS_AS(generate_synthetic(c, 1), ValidationError);
  c = SynthConfig{};
  c.image_dim = 0;
  CHECK_THROWS_AS(generate_synthetic(c, 1), ValidationError);
  c = SynthConfig{};
  c.sigma_img = -1.0;
  CHECK_THROWS_AS(generate_synthetic(c, 1), ValidationError);
}

TEST_CASE("synthetic coordinates: groups are tight, different groups are far apart") {
  SynthConfig c;
  c.n_locations = 400;
  const auto data = generate_synthetic(c, 5);
  const auto& refs = data.store.references();
  auto km = [](const GeoCoord& a, const GeoCoord& b) {
    constexpr double d2r = 3.14159265358979323846 / 180.0;
    const double s1 = std::sin((b.lat - a.lat) * d2r / 2), s2 = std::sin((b.lon - a.lon) * d2r / 2);
    return 2 * 6371.0 * std::asin(std::sqrt(s1 * s1 + std::cos(a.lat * d2r) * std::cos(b.lat * d2r) * s2 * s2));
  };
  double max_within = 0.0;
  double min_across = 1e9;
  double min_any = 1e9;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (std::size_t j = i + 1; j < refs.size(); ++j) {
      const double d = km(*refs[i].coord, *refs[j].coord);
      min_any = std::min(min_any, d);
      if (data.group_of_location[i] == data.group_of_location[j]) max_within = std::max(max_within, d);
      else min_across = std::min(min_across, d);
    }
  }
  CHECK(max_within < 0.5);
  CHECK(min_across > 5.0);
  CHECK(min_any >= 0.1);
}

TEST_CASE("large image noise within a group drives cosine R@1 to chance level 1/g") {
  SynthConfig c;  // 1000 locations, groups of 4, identical image centroids within a group
  c.location_spread = 0.0;
  c.sigma_img = 0.3;
  const auto data = generate_synthetic(c, 21);
  const auto rankings = retriever::retrieve_all(data.store, 4);
  std::size_t hits = 0;
  std::size_t in_group = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const auto& top = rankings[i].entries.front().reference_id;
    hits += top == data.store.queries()[i].ground_truth[0] ? 1 : 0;
    const auto loc = static_cast<std::size_t>(std::stoul(top.substr(1)));
    in_group += data.group_of_location[loc] == data.group_of_location[i] ? 1 : 0;
  }
  const double r1 = static_cast<double>(hits) / 1000.0;
  // Binomial(1000, 0.25) has sd ~0.0137; allow about 4 sd.
  CHECK(std::abs(r1 - 0.25) < 0.055);
  CHECK(static_cast<double>(in_group) / 1000.0 >= 0.99);
}

TEST_CASE("a large text margin makes locations separable by nearest text centroid") {
  SynthConfig c;
  c.text_margin = 1.0;
  c.sigma_txt = 0.3;
  const auto data = generate_synthetic(c, 4);
  const auto& cents = data.location_text_centroids;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.store.queries().size(); ++i) {
    const auto& t = *data.store.queries()[i].text_emb;
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t j = 0; j < cents.size(); ++j) {
      double dot = 0, nn = 0, mm = 0;
      for (std::size_t d = 0; d < t.size(); ++d) {
        dot += double(t[d]) * cents[j][d];
        nn += double(t[d]) * t[d];
        mm += double(cents[j][d]) * cents[j][d];
      }
      const double s = dot / std::sqrt(nn * mm);
      if (s > best_score) best_score = s, best = j;
    }
    correct += best == i ? 1 : 0;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(cents.size()) >= 0.99);
}
