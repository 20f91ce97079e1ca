#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvrank/geostore.hpp"

namespace cvrank::retriever {

inline constexpr std::size_t kDefaultK = 10;

enum class Accumulation { kFloat64, kFloat32 };

struct RankEntry {
  std::string reference_id;
  double score = 0.0;

  friend bool operator==(const RankEntry&, const RankEntry&) = default;
};

// Entries are sorted by score descending, ties by ascending reference id.
struct Ranking {
  std::string query_id;
  std::vector<RankEntry> entries;
  std::size_t k = kDefaultK;
  // Set when the ranking belongs to a single-positive evaluation instance.
  std::optional<std::string> instance_positive;
  bool reranked = false;

  friend bool operator==(const Ranking&, const Ranking&) = default;
};

// Strict weak order used everywhere a ranking is sorted.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b, const std::string& id_b) {
  return score_a > score_b || (score_a == score_b && id_a < id_b);
}

// Throws ValidationError on dimension mismatch or a zero-norm argument.
double cosine(std::span<const float> u, std::span<const float> v, Accumulation acc = Accumulation::kFloat64);

// Contiguous copy of the reference image embeddings with cached squared norms.
class ReferenceIndex {
 public:
  explicit ReferenceIndex(const geostore::Store& store, Accumulation acc = Accumulation::kFloat64);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  Accumulation accumulation() const { return acc_; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  std::size_t position(const std::string& id) const;

  double score(std::span<const float> query, double query_norm2, std::size_t i) const;
  double norm2(std::span<const float> v) const;

 private:
  std::size_t dim_ = 0;
  Accumulation acc_;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::vector<double> norms2_;
};

// Bounded-heap selection of the k best references. `excluded`, when given, is
// indexed like the ReferenceIndex and removes entries from consideration.
Ranking top_k(std::span<const float> query_emb, const ReferenceIndex& index, std::size_t k,
              const std::vector<bool>* excluded = nullptr);
Ranking top_k(const geostore::QueryRecord& query, const ReferenceIndex& index, std::size_t k);

// Exhaustive oracle: cosine() against every reference, then a full sort.
Ranking brute_force_rank(std::span<const float> query_emb, const geostore::Store& store,
                         Accumulation acc = Accumulation::kFloat64);

// Rankings for every query of the store, in store order. `threads` == 0 picks
// the hardware concurrency.
std::vector<Ranking> retrieve_all(const geostore::Store& store, std::size_t k, std::size_t threads = 0,
                                  Accumulation acc = Accumulation::kFloat64);

// One ranking per single-positive evaluation instance of every query.
std::vector<Ranking> retrieve_instances(const geostore::Store& store, std::size_t k,
                                        Accumulation acc = Accumulation::kFloat64);

// Line-delimited {"query_id", "k", "entries": [[id, score], ...]} records.
std::string rankings_to_jsonl(const std::vector<Ranking>& rankings);
void write_rankings(const std::string& path, const std::vector<Ranking>& rankings);
std::vector<Ranking> read_rankings(const std::string& path);

}  // namespace cvrank::retriever
