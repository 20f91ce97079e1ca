#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cvrank::geostore {

inline constexpr std::uint32_t kFormatVersion = 1;

struct GeoCoord {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]

  friend bool operator==(const GeoCoord&, const GeoCoord&) = default;
};

bool is_valid(const GeoCoord& c);

using Embedding = std::vector<float>;

// Empty string when `values` is a well-formed embedding of `dim` finite floats,
// otherwise a short description of the first violation.
std::string embedding_problem(std::span<const float> values, std::size_t dim);

struct ReferenceRecord {
  std::string id;
  Embedding image_emb;
  std::optional<Embedding> text_emb;
  std::optional<std::string> caption;
  std::optional<GeoCoord> coord;

  friend bool operator==(const ReferenceRecord&, const ReferenceRecord&) = default;
};

struct QueryRecord {
  std::string id;
  Embedding image_emb;
  std::optional<Embedding> text_emb;
  std::optional<std::string> caption;
  std::optional<GeoCoord> coord;
  // Sorted, unique, non-empty.
  std::vector<std::string> ground_truth;
  // References that overlap the true location without being it (hard negatives).
  std::vector<std::string> semi_positives;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

struct StoreManifest {
  std::uint32_t image_dim = 0;
  std::uint32_t text_dim = 0;
  std::uint64_t reference_count = 0;
  std::uint64_t query_count = 0;
  std::uint32_t format_version = kFormatVersion;

  friend bool operator==(const StoreManifest&, const StoreManifest&) = default;
};

std::string manifest_to_text(const StoreManifest& m);
StoreManifest parse_manifest(std::string_view text, const std::string& source);
StoreManifest read_manifest(const std::string& path);

enum class Side { kReference, kQuery };

// In-memory reference database plus query set. Construction validates every
// cross-record invariant; a constructed store is never inconsistent.
class Store {
 public:
  Store() = default;
  Store(std::uint32_t image_dim, std::uint32_t text_dim, std::vector<ReferenceRecord> references,
        std::vector<QueryRecord> queries);

  StoreManifest manifest() const;
  std::uint32_t image_dim() const { return image_dim_; }
  std::uint32_t text_dim() const { return text_dim_; }

  const std::vector<ReferenceRecord>& references() const { return references_; }
  const std::vector<QueryRecord>& queries() const { return queries_; }

  const ReferenceRecord* find_reference(std::string_view id) const;
  const QueryRecord* find_query(std::string_view id) const;
  // Throws ValidationError naming the id.
  const ReferenceRecord& reference(std::string_view id) const;
  const QueryRecord& query(std::string_view id) const;

  // Replaces caption and text embedding of one record. Exclusive-writer use only.
  void set_text(Side side, std::string_view id, std::string caption, Embedding text_emb);

  friend bool operator==(const Store& a, const Store& b) {
    return a.image_dim_ == b.image_dim_ && a.text_dim_ == b.text_dim_ && a.references_ == b.references_ &&
           a.queries_ == b.queries_;
  }

 private:
  void index_and_validate();

  std::uint32_t image_dim_ = 0;
  std::uint32_t text_dim_ = 0;
  std::vector<ReferenceRecord> references_;
  std::vector<QueryRecord> queries_;
  std::unordered_map<std::string, std::size_t> ref_index_;
  std::unordered_map<std::string, std::size_t> query_index_;
};

// ---- Embedding matrix files ("GVLM") ----

struct EmbeddingMatrix {
  std::uint32_t dim = 0;
  std::vector<Embedding> rows;
};

std::string encode_embedding_matrix(std::span<const Embedding> rows, std::uint32_t dim);
EmbeddingMatrix decode_embedding_matrix(std::string_view bytes, const std::string& what);
void write_embedding_matrix(const std::string& path, std::span<const Embedding> rows, std::uint32_t dim);
EmbeddingMatrix read_embedding_matrix(const std::string& path);

void write_id_file(const std::string& path, std::span<const std::string> ids);
std::vector<std::string> read_id_file(const std::string& path);

// ---- Store directories ----

void save_store(const Store& store, const std::string& dir);
Store load_store(const std::string& dir);

// ---- Ingestion ----

struct IngestSide {
  std::string embeddings;  // JSONL rows {"id", "image": [...], "text": [...]?}; queries add "ground_truth"
  std::string captions;    // optional JSONL {"id", "caption"}
  std::string coords;      // optional JSONL {"id", "lat", "lon"}
};

struct IngestSources {
  IngestSide references;
  IngestSide queries;
};

Store ingest(const IngestSources& sources, const StoreManifest& manifest);
// ingest() followed by save_store(); returns the persisted store.
Store ingest_to(const IngestSources& sources, const StoreManifest& manifest, const std::string& out_dir);

// ---- Single-positive evaluation instances ----

struct EvalInstance {
  std::string query_id;
  std::vector<std::string> candidate_pool;  // sorted
  std::string positive_id;

  friend bool operator==(const EvalInstance&, const EvalInstance&) = default;
};

// One instance per ground-truth id; every other positive of the query is
// removed from that instance's pool.
std::vector<EvalInstance> build_eval_instances(const QueryRecord& query, const Store& store);

}  // namespace cvrank::geostore
