#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "cvrank/binary_io.hpp"
#include "cvrank/error.hpp"
#include "cvrank/evaluator.hpp"
#include "cvrank/synth.hpp"
#include "support.hpp"

using namespace cvrank;
using namespace cvrank::evaluator;

namespace {

// Ranking whose entries are the given ids with descending placeholder scores.
Ranking ranking_of(const std::string& qid, const std::vector<std::string>& ids) {
  Ranking r;
  r.query_id = qid;
  r.k = ids.size();
  for (std::size_t i = 0; i < ids.size(); ++i) r.entries.push_back({ids[i], 1.0 - 0.01 * static_cast<double>(i)});
  return r;
}

// Ids "x0".."x{n-1}" with `truth` placed at 1-based `rank`; rank 0 means absent.
std::vector<std::string> with_truth_at(std::size_t n, std::size_t rank, const std::string& truth) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("x" + std::to_string(i));
  if (rank > 0) ids[rank - 1] = truth;
  return ids;
}

// Chord-length form of the great-circle distance, computed from unit vectors.
double chord_distance(const GeoCoord& p, const GeoCoord& q, double radius) {
  auto unit = [](const GeoCoord& c) {
    const double la = c.lat * std::numbers::pi / 180.0;
    const double lo = c.lon * std::numbers::pi / 180.0;
    return std::array<double, 3>{std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
  };
  const auto a = unit(p), b = unit(q);
  const double chord = std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
  return 2.0 * radius * std::asin(std::min(1.0, chord / 2.0));
}

// AP straight from its definition: precision at each positive's rank.
double ap_oracle(const std::vector<std::string>& ids, const std::set<std::string>& positives) {
  double sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (positives.contains(ids[i])) sum += static_cast<double>(++seen) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(positives.size());
}

}  // namespace

TEST_CASE("recall at ranks 1, 4 and 12") {
  // Depth 12 so the third truth is retrieved but outside the top 10.
  const std::vector<Ranking> rankings{ranking_of("a", with_truth_at(12, 1, "ta")),
                                      ranking_of("b", with_truth_at(12, 4, "tb")),
                                      ranking_of("c", with_truth_at(12, 12, "tc"))};
  const GroundTruth truth{{"a", {"ta"}}, {"b", {"tb"}}, {"c", {"tc"}}};
  CHECK(recall_at_k(rankings, truth, 1) == 1.0 / 3.0);
  CHECK(recall_at_k(rankings, truth, 5) == 2.0 / 3.0);
  CHECK(recall_at_k(rankings, truth, 10) == 2.0 / 3.0);
  CHECK(recall_at_k(rankings, truth, 12) == 1.0);
  // k beyond the list counts missing entries as misses.
  CHECK(recall_at_k(rankings, truth, 50) == 1.0);
}

TEST_CASE("perfect retrieval and multi-positive hits") {
  const std::vector<Ranking> rankings{ranking_of("a", {"p", "x"}), ranking_of("b", {"y", "q2"})};
  const GroundTruth truth{{"a", {"p"}}, {"b", {"q1", "q2"}}};
  CHECK(recall_at_k(rankings, truth, 2) == 1.0);
  CHECK(recall_at_k(rankings, truth, 1) == 0.5);
  // An instance positive overrides the ground-truth set.
  auto inst = rankings[1];
  inst.instance_positive = "q1";
  CHECK(recall_at_k({inst}, truth, 2) == 0.0);
}

TEST_CASE("recall errors name the unknown query") {
  const GroundTruth truth{{"a", {"p"}}};
  try {
    recall_at_k({ranking_of("ghost", {"p"})}, truth, 1);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("'ghost'") != std::string::npos);
  }
}

TEST_CASE("recall is monotone in k") {
  std::mt19937_64 rng(1);
  GroundTruth truth;
  std::vector<Ranking> rankings;
  for (int q = 0; q < 100; ++q) {
    const auto id = "q" + std::to_string(q);
    truth[id] = {"t" + std::to_string(q)};
    rankings.push_back(ranking_of(id, with_truth_at(10, rng() % 11, "t" + std::to_string(q))));
  }
  for (std::size_t k = 1; k < 12; ++k) CHECK(recall_at_k(rankings, truth, k) <= recall_at_k(rankings, truth, k + 1));
}

TEST_CASE("average precision hand cases") {
  CHECK(average_precision(ranking_of("q", {"p", "a", "b"}), {"p"}) == 1.0);
  CHECK(average_precision(ranking_of("q", {"a", "b", "p"}), {"p"}) == 1.0 / 3.0);
  CHECK(average_precision(ranking_of("q", {"p", "a", "p2"}), {"p", "p2"}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(average_precision(ranking_of("q", {"a", "b"}), {"p"}) == 0.0);
  CHECK(average_precision(ranking_of("q", {"p", "a"}), {"p", "never"}) == 0.5);
  CHECK_THROWS_AS(average_precision(ranking_of("q", {"p"}), {}), ValidationError);
}

TEST_CASE("single-positive AP is exactly 1/r; multi-positive AP matches the definition") {
  std::mt19937_64 rng(4);
  for (std::size_t r = 1; r <= 10; ++r) {
    CHECK(average_precision(ranking_of("q", with_truth_at(10, r, "t")), {"t"}) == 1.0 / static_cast<double>(r));
  }
  for (int t = 0; t < 300; ++t) {
    std::vector<std::string> ids;
    std::set<std::string> positives;
    const std::size_t n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("r" + std::to_string(i));
      if (rng() % 3 == 0) positives.insert(ids.back());
    }
    if (rng() % 2) positives.insert("unretrieved");
    if (positives.empty()) positives.insert(ids.front());
    const std::vector<std::string> pos(positives.begin(), positives.end());
    CHECK(average_precision(ranking_of("q", ids), pos) == doctest::Approx(ap_oracle(ids, positives)).epsilon(1e-12));
  }
}

TEST_CASE("haversine closed-form arcs") {
  CHECK(haversine({0, 0}, {0, 0}) == 0.0);
  const double quarter = std::numbers::pi / 2.0 * 6371.0;
  const double half = std::numbers::pi * 6371.0;
  CHECK(std::abs(haversine({0, 0}, {90, 0}) - quarter) <= 1e-6 * quarter);
  CHECK(std::abs(haversine({0, 0}, {0, 180}) - half) <= 1e-6 * half);
  CHECK(std::abs(quarter - 10007.543) < 1e-3);
  CHECK(std::abs(half - 20015.087) < 1e-3);
  CHECK(haversine({0, 0}, {0, 180}, 1.0) == doctest::Approx(std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("haversine agrees with the chord formula and is a metric") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  for (int t = 0; t < 1000; ++t) {
    const GeoCoord a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, c{lat(rng), lon(rng)};
    const double ab = haversine(a, b);
    CHECK(ab == doctest::Approx(chord_distance(a, b, 6371.0)).epsilon(1e-9).scale(1e-6));
    CHECK(ab == haversine(b, a));
    CHECK(ab >= 0.0);
    CHECK(haversine(a, a) == 0.0);
    CHECK(ab <= haversine(a, c) + haversine(c, b) + 1e-9);
  }
}

TEST_CASE("threshold recall hand cases") {
  // 0.3 km east of the truth along the equator.
  const double dlon = 0.3 / (6371.0 * std::numbers::pi / 180.0);
  const CoordTable coords{{"truth", {0, 0}}, {"near", {0, dlon}}, {"far", {1, 1}}};
  const GroundTruth truth{{"q", {"truth"}}};
  const std::vector<Ranking> near{ranking_of("q", {"near", "far"})};
  CHECK(haversine({0, 0}, {0, dlon}) == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(threshold_recall(near, coords, truth, 0.5, 1) == 1.0);
  CHECK(threshold_recall(near, coords, truth, 0.0, 1) == 0.0);
  CHECK(threshold_recall(near, coords, truth, 0.2, 2) == 0.0);
  const std::vector<Ranking> exact{ranking_of("q", {"far", "truth"})};
  CHECK(threshold_recall(exact, coords, truth, 0.0, 2) == 1.0);
  CHECK(threshold_recall(exact, coords, truth, 0.0, 1) == 0.0);

  try {
    threshold_recall({ranking_of("q", {"unknown"})}, coords, truth, 0.5, 1);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("'unknown'") != std::string::npos);
  }
}

TEST_CASE("zero threshold equals exact-id recall when references are at least 100 m apart") {
  geostore::SynthConfig sc;
  sc.n_locations = 200;
  sc.image_dim = 16;
  sc.text_dim = 8;
  sc.sigma_img = 0.5;
  const auto ds = geostore::generate_synthetic(sc, 11);
  const auto rankings = retriever::retrieve_all(ds.store, 10, 1);
  const auto truth = ground_truth_of(ds.store);
  const auto coords = reference_coords(ds.store);
  for (std::size_t k : {1u, 5u, 10u}) {
    CHECK(threshold_recall(rankings, coords, truth, 0.0, k) == recall_at_k(rankings, truth, k));
    CHECK(threshold_recall(rankings, coords, truth, 0.5, k) >= threshold_recall(rankings, coords, truth, 0.0, k));
    if (k < 10) {
      CHECK(threshold_recall(rankings, coords, truth, 0.5, k) <= threshold_recall(rankings, coords, truth, 0.5, 10));
    }
  }
}

TEST_CASE("eval config validation") {
  EvalConfig c;
  c.ks = {};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.ks = {5, 1};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = EvalConfig{};
  c.thresholds_km = {-1};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = EvalConfig{};
  c.earth_radius_km = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("compare: identity gives zero deltas") {
  const std::vector<Ranking> rankings{ranking_of("a", with_truth_at(10, 3, "ta")),
                                      ranking_of("b", with_truth_at(10, 7, "tb"))};
  const GroundTruth truth{{"a", {"ta"}}, {"b", {"tb"}}};
  const auto report = compare_rankings(rankings, rankings, truth, nullptr, EvalConfig{});
  REQUIRE(report.reranked.has_value());
  CHECK(*report.reranked == report.baseline);
  const auto doc = nlohmann::json::parse(report_json(report));
  CHECK(doc.at("delta").size() == 4);
  for (const auto& [key, value] : doc.at("delta").items()) CHECK(value.get<double>() == 0.0);
}

TEST_CASE("compare: moving every truth from rank 3 to rank 1") {
  std::vector<Ranking> base, moved;
  GroundTruth truth;
  for (int q = 0; q < 20; ++q) {
    const auto id = "q" + std::to_string(q);
    const auto t = "t" + std::to_string(q);
    truth[id] = {t};
    auto ids = with_truth_at(10, 3, t);
    base.push_back(ranking_of(id, ids));
    std::swap(ids[0], ids[2]);
    moved.push_back(ranking_of(id, ids));
    moved.back().reranked = true;
  }
  const auto report = compare_rankings(base, moved, truth, nullptr, EvalConfig{});
  CHECK(report.baseline.recall[0] == 0.0);
  CHECK(report.reranked->recall[0] == 1.0);
  CHECK(report.reranked->recall[2] == report.baseline.recall[2]);
  CHECK(report.reranked->mean_ap > report.baseline.mean_ap);
  CHECK(report.retrieval_depth == 10);
  const auto doc = nlohmann::json::parse(report_json(report));
  CHECK(doc.at("delta").at("R@1").get<double>() > 0.0);
  CHECK(doc.at("delta").at("R@10").get<double>() == 0.0);
  const auto csv = report_csv(report);
  CHECK(csv.starts_with("metric,baseline,reranked,delta\n"));
  CHECK(csv.find("R@1,0.000000,1.000000,+1.000000\n") != std::string::npos);
}

TEST_CASE("compare errors") {
  const GroundTruth truth{{"a", {"ta"}}, {"b", {"tb"}}};
  const std::vector<Ranking> ab{ranking_of("a", {"ta", "x"}), ranking_of("b", {"y", "tb"})};
  const std::vector<Ranking> a_only{ranking_of("a", {"ta", "x"})};
  CHECK_THROWS_AS(compare_rankings(ab, a_only, truth, nullptr, EvalConfig{}), ValidationError);
  // Dropping a candidate changes recall at the retrieval depth.
  const std::vector<Ranking> lost{ranking_of("a", {"ta", "x"}), ranking_of("b", {"y", "z"})};
  CHECK_THROWS_AS(compare_rankings(ab, lost, truth, nullptr, EvalConfig{}), ValidationError);
}

TEST_CASE("evaluate_report counts skipped queries and writes all artefacts") {
  geostore::SynthConfig sc;
  sc.n_locations = 40;
  sc.image_dim = 8;
  sc.text_dim = 8;
  const auto ds = geostore::generate_synthetic(sc, 2);
  auto rankings = retriever::retrieve_all(ds.store, 10, 1);
  rankings.pop_back();
  const auto truth = ground_truth_of(ds.store);
  const auto coords = reference_coords(ds.store);
  const auto report = evaluate_report(rankings, truth, &coords, EvalConfig{});
  CHECK(report.query_count == 39);
  CHECK(report.skipped_count == 1);
  CHECK(report.has_coordinates);
  CHECK(report.baseline.threshold_recall.size() == 2);
  CHECK(report.baseline.recall.size() == 3);

  cvrank::testing::TempDir dir;
  write_report(dir.str(), report);
  const auto doc = nlohmann::json::parse(io::read_file(dir / "report.json"));
  CHECK(doc.at("query_count") == 39);
  CHECK_FALSE(doc.contains("delta"));
  CHECK(io::read_file(dir / "report.svg").starts_with("<svg"));
  CHECK(io::read_file(dir / "report.csv").find("R@10@0.5km") != std::string::npos);
}
