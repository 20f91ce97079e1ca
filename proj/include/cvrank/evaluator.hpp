#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cvrank/geostore.hpp"
#include "cvrank/retriever.hpp"

namespace cvrank::evaluator {

using geostore::GeoCoord;
using retriever::Ranking;

// query id -> positive reference ids
using GroundTruth = std::map<std::string, std::vector<std::string>>;
// reference id -> location
using CoordTable = std::unordered_map<std::string, GeoCoord>;

inline constexpr double kEarthRadiusKm = 6371.0;

struct EvalConfig {
  std::vector<std::size_t> ks{1, 5, 10};
  std::vector<double> thresholds_km{0.0, 0.5};
  double earth_radius_km = kEarthRadiusKm;

  void validate() const;
};

GroundTruth ground_truth_of(const geostore::Store& store);
// Coordinates of every reference that has one.
CoordTable reference_coords(const geostore::Store& store);

// Positives that count for `ranking`: its instance positive when set,
// otherwise every ground-truth id of the query. Unknown query ids throw.
const std::vector<std::string>& positives_for(const Ranking& ranking, const GroundTruth& truth,
                                              std::vector<std::string>& scratch);

// Fraction of rankings with any positive in the first k entries.
double recall_at_k(const std::vector<Ranking>& rankings, const GroundTruth& truth, std::size_t k);

// Mean of precision@rank over the positives; positives never retrieved add 0.
double average_precision(const Ranking& ranking, const std::vector<std::string>& positives);

double haversine(const GeoCoord& p, const GeoCoord& q, double radius_km = kEarthRadiusKm);

// Fraction of rankings with a top-k reference within `threshold_km` (inclusive)
// of some positive's location. Missing coordinates throw, naming the id.
double threshold_recall(const std::vector<Ranking>& rankings, const CoordTable& coords, const GroundTruth& truth,
                        double threshold_km, std::size_t k, double radius_km = kEarthRadiusKm);

struct Metrics {
  std::vector<double> recall;                        // parallel to EvalConfig::ks
  std::vector<std::vector<double>> threshold_recall;  // [threshold][k]; empty without coordinates
  double mean_ap = 0.0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct EvalReport {
  EvalConfig config;
  std::size_t query_count = 0;    // rankings evaluated
  std::size_t skipped_count = 0;  // ground-truth queries with no ranking
  std::size_t retrieval_depth = 0;
  bool has_coordinates = false;
  Metrics baseline;
  std::optional<Metrics> reranked;
};

// `coords` may be null or empty, in which case threshold metrics are skipped.
Metrics evaluate(const std::vector<Ranking>& rankings, const GroundTruth& truth, const CoordTable* coords,
                 const EvalConfig& config);

EvalReport evaluate_report(const std::vector<Ranking>& rankings, const GroundTruth& truth, const CoordTable* coords,
                           const EvalConfig& config);

// Both ranking sets must cover the same queries (and instances). Throws
// ValidationError when recall at the retrieval depth differs, since a
// reranking is only allowed to permute candidates.
EvalReport compare_rankings(const std::vector<Ranking>& baseline, const std::vector<Ranking>& reranked,
                            const GroundTruth& truth, const CoordTable* coords, const EvalConfig& config);

// report.json, report.csv and report.svg under `out_dir`.
void write_report(const std::string& out_dir, const EvalReport& report);
std::string report_json(const EvalReport& report);
std::string report_csv(const EvalReport& report);
std::string report_svg(const EvalReport& report);

}  // namespace cvrank::evaluator
