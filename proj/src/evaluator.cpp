#include "cvrank/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <unordered_set>

#include "cvrank/error.hpp"

namespace cvrank::evaluator {

void EvalConfig::validate() const {
  if (ks.empty()) throw ValidationError("eval: ks must be nonempty");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == 0) throw ValidationError("eval: ks must be positive");
    if (i && ks[i] <= ks[i - 1]) throw ValidationError("eval: ks must be strictly ascending");
  }
  for (std::size_t i = 0; i < thresholds_km.size(); ++i) {
    if (!(thresholds_km[i] >= 0.0) || !std::isfinite(thresholds_km[i])) {
      throw ValidationError("eval: thresholds must be finite and >= 0");
    }
    if (i && thresholds_km[i] <= thresholds_km[i - 1]) throw ValidationError("eval: thresholds must be ascending");
  }
  if (!(earth_radius_km > 0.0)) throw ValidationError("eval: earth radius must be positive");
}

GroundTruth ground_truth_of(const geostore::Store& store) {
  GroundTruth out;
  for (const auto& q : store.queries()) out.emplace(q.id, q.ground_truth);
  return out;
}

CoordTable reference_coords(const geostore::Store& store) {
  CoordTable out;
  for (const auto& r : store.references()) {
    if (r.coord) out.emplace(r.id, *r.coord);
  }
  return out;
}

const std::vector<std::string>& positives_for(const Ranking& ranking, const GroundTruth& truth,
                                              std::vector<std::string>& scratch) {
  const auto it = truth.find(ranking.query_id);
  if (it == truth.end()) throw ValidationError("unknown query id '" + ranking.query_id + "' in rankings");
  if (ranking.instance_positive) {
    scratch.assign(1, *ranking.instance_positive);
    return scratch;
  }
  return it->second;
}

namespace {

bool contains(const std::vector<std::string>& ids, const std::string& id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

bool hit_at(const Ranking& ranking, const std::vector<std::string>& positives, std::size_t k) {
  const auto n = std::min(k, ranking.entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (contains(positives, ranking.entries[i].reference_id)) return true;
  }
  return false;
}

double to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

double recall_at_k(const std::vector<Ranking>& rankings, const GroundTruth& truth, std::size_t k) {
  if (rankings.empty()) return 0.0;
  std::vector<std::string> scratch;
  std::size_t hits = 0;
  for (const auto& r : rankings) hits += hit_at(r, positives_for(r, truth, scratch), k) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double average_precision(const Ranking& ranking, const std::vector<std::string>& positives) {
  const std::set<std::string> pos(positives.begin(), positives.end());
  if (pos.empty()) throw ValidationError("average_precision: empty positive set for '" + ranking.query_id + "'");
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    if (pos.contains(ranking.entries[i].reference_id)) {
      ++found;
      sum += static_cast<double>(found) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(pos.size());
}

double haversine(const GeoCoord& p, const GeoCoord& q, double radius_km) {
  const double dlat = to_rad(q.lat - p.lat);
  const double dlon = to_rad(q.lon - p.lon);
  const double s_lat = std::sin(dlat / 2.0);
  const double s_lon = std::sin(dlon / 2.0);
  double a = s_lat * s_lat + std::cos(to_rad(p.lat)) * std::cos(to_rad(q.lat)) * s_lon * s_lon;
  a = std::clamp(a, 0.0, 1.0);
  return 2.0 * radius_km * std::asin(std::sqrt(a));
}

double threshold_recall(const std::vector<Ranking>& rankings, const CoordTable& coords, const GroundTruth& truth,
                        double threshold_km, std::size_t k, double radius_km) {
  if (rankings.empty()) return 0.0;
  auto coord_of = [&](const std::string& id) -> const GeoCoord& {
    const auto it = coords.find(id);
    if (it == coords.end()) throw ValidationError("no coordinate for reference '" + id + "'");
    return it->second;
  };
  std::vector<std::string> scratch;
  std::size_t hits = 0;
  for (const auto& r : rankings) {
    const auto& positives = positives_for(r, truth, scratch);
    std::vector<GeoCoord> targets;
    for (const auto& p : positives) targets.push_back(coord_of(p));
    const auto n = std::min(k, r.entries.size());
    bool hit = false;
    for (std::size_t i = 0; i < n && !hit; ++i) {
      const auto& c = coord_of(r.entries[i].reference_id);
      for (const auto& t : targets) {
        if (haversine(c, t, radius_km) <= threshold_km) {
          hit = true;
          break;
        }
      }
    }
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

Metrics evaluate(const std::vector<Ranking>& rankings, const GroundTruth& truth, const CoordTable* coords,
                 const EvalConfig& config) {
  config.validate();
  Metrics m;
  for (auto k : config.ks) m.recall.push_back(recall_at_k(rankings, truth, k));
  if (coords && !coords->empty()) {
    for (double t : config.thresholds_km) {
      std::vector<double> row;
      for (auto k : config.ks) row.push_back(threshold_recall(rankings, *coords, truth, t, k, config.earth_radius_km));
      m.threshold_recall.push_back(std::move(row));
    }
  }
  std::vector<std::string> scratch;
  double ap = 0.0;
  for (const auto& r : rankings) ap += average_precision(r, positives_for(r, truth, scratch));
  m.mean_ap = rankings.empty() ? 0.0 : ap / static_cast<double>(rankings.size());
  return m;
}

namespace {

std::size_t depth_of(const std::vector<Ranking>& rankings) {
  std::size_t d = 0;
  for (const auto& r : rankings) d = std::max(d, r.k);
  return d;
}

std::size_t skipped(const std::vector<Ranking>& rankings, const GroundTruth& truth) {
  std::unordered_set<std::string> seen;
  for (const auto& r : rankings) seen.insert(r.query_id);
  std::size_t n = 0;
  for (const auto& [q, _] : truth) n += seen.contains(q) ? 0 : 1;
  return n;
}

std::string instance_key(const Ranking& r) { return r.query_id + '\x1f' + r.instance_positive.value_or(""); }

}  // namespace

EvalReport evaluate_report(const std::vector<Ranking>& rankings, const GroundTruth& truth, const CoordTable* coords,
                           const EvalConfig& config) {
  EvalReport rep;
  rep.config = config;
  rep.baseline = evaluate(rankings, truth, coords, config);
  rep.query_count = rankings.size();
  rep.skipped_count = skipped(rankings, truth);
  rep.retrieval_depth = depth_of(rankings);
  rep.has_coordinates = !rep.baseline.threshold_recall.empty();
  return rep;
}

EvalReport compare_rankings(const std::vector<Ranking>& baseline, const std::vector<Ranking>& reranked,
                            const GroundTruth& truth, const CoordTable* coords, const EvalConfig& config) {
  std::multiset<std::string> a, b;
  for (const auto& r : baseline) a.insert(instance_key(r));
  for (const auto& r : reranked) b.insert(instance_key(r));
  if (a != b) {
    std::vector<std::string> diff;
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
    auto id = diff.empty() ? std::string() : diff.front().substr(0, diff.front().find('\x1f'));
    throw ValidationError("compare: baseline and reranked rankings cover different queries (first: '" + id + "')");
  }
  auto rep = evaluate_report(baseline, truth, coords, config);
  rep.reranked = evaluate(reranked, truth, coords, config);
  rep.retrieval_depth = std::max(rep.retrieval_depth, depth_of(reranked));
  const auto depth = rep.retrieval_depth;
  const double before = recall_at_k(baseline, truth, depth);
  const double after = recall_at_k(reranked, truth, depth);
  if (before != after) {
    throw ValidationError("compare: R@" + std::to_string(depth) + " differs between baseline (" +
                          std::to_string(before) + ") and reranked (" + std::to_string(after) +
                          "); reranking must only permute candidates");
  }
  return rep;
}

}  // namespace cvrank::evaluator
