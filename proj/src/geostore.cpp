#include "cvrank/geostore.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "cvrank/binary_io.hpp"
#include "cvrank/error.hpp"
#include "cvrank/jsonl.hpp"

namespace cvrank::geostore {

namespace fs = std::filesystem;
using nlohmann::json;
using jsonl::ordered_json;

constexpr std::string_view kMatrixMagic = "GVLM";

bool is_valid(const GeoCoord& c) {
  return std::isfinite(c.lat) && std::isfinite(c.lon) && c.lat >= -90.0 && c.lat <= 90.0 && c.lon >= -180.0 &&
         c.lon <= 180.0;
}

std::string embedding_problem(std::span<const float> values, std::size_t dim) {
  if (values.size() != dim) {
    return "dimension mismatch: got " + std::to_string(values.size()) + " values, expected " + std::to_string(dim);
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) return "non-finite value at index " + std::to_string(i);
  }
  return {};
}

namespace {

bool all_zero(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
}

std::string side_name(Side side) { return side == Side::kReference ? "reference" : "query"; }

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

std::string manifest_to_text(const StoreManifest& m) {
  std::ostringstream out;
  out << "format_version=" << m.format_version << '\n'
      << "image_dim=" << m.image_dim << '\n'
      << "text_dim=" << m.text_dim << '\n'
      << "reference_count=" << m.reference_count << '\n'
      << "query_count=" << m.query_count << '\n';
  return out.str();
}

StoreManifest parse_manifest(std::string_view text, const std::string& source) {
  StoreManifest m;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(located(source, line_no, "", "expected key=value"));
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    std::uint64_t n = 0;
    try {
      std::size_t used = 0;
      n = std::stoull(value, &used);
      if (used != value.size() || value.front() == '-') throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ValidationError(located(source, line_no, "", "'" + key + "' is not a non-negative integer"));
    }
    if (!seen.insert(key).second) throw ValidationError(located(source, line_no, "", "duplicate key '" + key + "'"));
    if (key == "format_version") {
      m.format_version = static_cast<std::uint32_t>(n);
    } else if (key == "image_dim") {
      m.image_dim = static_cast<std::uint32_t>(n);
    } else if (key == "text_dim") {
      m.text_dim = static_cast<std::uint32_t>(n);
    } else if (key == "reference_count") {
      m.reference_count = n;
    } else if (key == "query_count") {
      m.query_count = n;
    } else {
      throw ValidationError(located(source, line_no, "", "unknown manifest key '" + key + "'"));
    }
  }
  for (const char* required : {"image_dim", "text_dim", "reference_count", "query_count"}) {
    if (!seen.contains(required)) throw ValidationError(source + ": manifest is missing '" + required + "'");
  }
  if (m.format_version != kFormatVersion) {
    throw ValidationError(source + ": unsupported format_version " + std::to_string(m.format_version));
  }
  if (m.image_dim == 0 || m.text_dim == 0) throw ValidationError(source + ": dimensions must be positive");
  return m;
}

StoreManifest read_manifest(const std::string& path) { return parse_manifest(io::read_file(path), path); }

// ---------------------------------------------------------------------------
// Store

Store::Store(std::uint32_t image_dim, std::uint32_t text_dim, std::vector<ReferenceRecord> references,
             std::vector<QueryRecord> queries)
    : image_dim_(image_dim), text_dim_(text_dim), references_(std::move(references)), queries_(std::move(queries)) {
  index_and_validate();
}

void Store::index_and_validate() {
  if (image_dim_ == 0 || text_dim_ == 0) throw ValidationError("store dimensions must be positive");
  ref_index_.clear();
  query_index_.clear();

  auto check_common = [&](const std::string& kind, const std::string& id, const Embedding& img,
                          const std::optional<Embedding>& txt, const std::optional<GeoCoord>& coord) {
    if (id.empty()) throw ValidationError(kind + " with empty id");
    if (auto p = embedding_problem(img, image_dim_); !p.empty()) {
      throw ValidationError(kind + " '" + id + "' image embedding: " + p);
    }
    if (all_zero(img)) throw ValidationError(kind + " '" + id + "' image embedding has zero norm");
    if (txt) {
      if (auto p = embedding_problem(*txt, text_dim_); !p.empty()) {
        throw ValidationError(kind + " '" + id + "' text embedding: " + p);
      }
    }
    if (coord && !is_valid(*coord)) throw ValidationError(kind + " '" + id + "' coordinate out of range");
  };

  for (std::size_t i = 0; i < references_.size(); ++i) {
    const auto& r = references_[i];
    check_common("reference", r.id, r.image_emb, r.text_emb, r.coord);
    if (!ref_index_.emplace(r.id, i).second) throw ValidationError("duplicate reference id '" + r.id + "'");
  }
  for (std::size_t i = 0; i < queries_.size(); ++i) {
    auto& q = queries_[i];
    check_common("query", q.id, q.image_emb, q.text_emb, q.coord);
    if (!query_index_.emplace(q.id, i).second) throw ValidationError("duplicate query id '" + q.id + "'");
    std::sort(q.ground_truth.begin(), q.ground_truth.end());
    q.ground_truth.erase(std::unique(q.ground_truth.begin(), q.ground_truth.end()), q.ground_truth.end());
    std::sort(q.semi_positives.begin(), q.semi_positives.end());
    q.semi_positives.erase(std::unique(q.semi_positives.begin(), q.semi_positives.end()), q.semi_positives.end());
    if (q.ground_truth.empty()) throw ValidationError("query '" + q.id + "' has no ground-truth reference");
    for (const auto& g : q.ground_truth) {
      if (!ref_index_.contains(g)) {
        throw ValidationError("query '" + q.id + "' ground-truth id '" + g + "' does not resolve to a reference");
      }
    }
    for (const auto& s : q.semi_positives) {
      if (!ref_index_.contains(s)) {
        throw ValidationError("query '" + q.id + "' semi-positive id '" + s + "' does not resolve to a reference");
      }
      if (std::binary_search(q.ground_truth.begin(), q.ground_truth.end(), s)) {
        throw ValidationError("query '" + q.id + "' lists '" + s + "' as both positive and semi-positive");
      }
    }
  }
}

StoreManifest Store::manifest() const {
  return StoreManifest{image_dim_, text_dim_, references_.size(), queries_.size(), kFormatVersion};
}

const ReferenceRecord* Store::find_reference(std::string_view id) const {
  auto it = ref_index_.find(std::string(id));
  return it == ref_index_.end() ? nullptr : &references_[it->second];
}

const QueryRecord* Store::find_query(std::string_view id) const {
  auto it = query_index_.find(std::string(id));
  return it == query_index_.end() ? nullptr : &queries_[it->second];
}

const ReferenceRecord& Store::reference(std::string_view id) const {
  if (const auto* r = find_reference(id)) return *r;
  throw ValidationError("unknown reference id '" + std::string(id) + "'");
}

const QueryRecord& Store::query(std::string_view id) const {
  if (const auto* q = find_query(id)) return *q;
  throw ValidationError("unknown query id '" + std::string(id) + "'");
}

void Store::set_text(Side side, std::string_view id, std::string caption, Embedding text_emb) {
  if (auto p = embedding_problem(text_emb, text_dim_); !p.empty()) {
    throw ValidationError(side_name(side) + " '" + std::string(id) + "' text embedding: " + p);
  }
  auto assign = [&](auto& record) {
    record.caption = std::move(caption);
    record.text_emb = std::move(text_emb);
  };
  if (side == Side::kReference) {
    auto it = ref_index_.find(std::string(id));
    if (it == ref_index_.end()) throw ValidationError("unknown reference id '" + std::string(id) + "'");
    assign(references_[it->second]);
  } else {
    auto it = query_index_.find(std::string(id));
    if (it == query_index_.end()) throw ValidationError("unknown query id '" + std::string(id) + "'");
    assign(queries_[it->second]);
  }
}

// ---------------------------------------------------------------------------
// Embedding matrix files

std::string encode_embedding_matrix(std::span<const Embedding> rows, std::uint32_t dim) {
  io::ByteWriter w;
  w.put_bytes(kMatrixMagic);
  w.put_u32(kFormatVersion);
  w.put_u32(dim);
  w.put_u64(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) {
      throw ValidationError("row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                            " values, matrix dim is " + std::to_string(dim));
    }
    w.put_f32s(rows[i]);
  }
  return w.buffer();
}

EmbeddingMatrix decode_embedding_matrix(std::string_view bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  if (bytes.size() < kMatrixMagic.size() || r.get_bytes(kMatrixMagic.size()) != kMatrixMagic) {
    throw FormatError(what + ": bad magic (not a GVLM embedding matrix)");
  }
  const auto version = r.get_u32();
  if (version != kFormatVersion) {
    throw FormatError(what + ": unsupported format version " + std::to_string(version));
  }
  EmbeddingMatrix m;
  m.dim = r.get_u32();
  const auto count = r.get_u64();
  const std::uint64_t payload = count * m.dim * sizeof(float);
  if (m.dim != 0 && count != payload / (m.dim * sizeof(float))) throw FormatError(what + ": row count overflows");
  if (r.remaining() < payload) {
    throw FormatError(what + ": truncated payload (" + std::to_string(r.remaining()) + " of " +
                      std::to_string(payload) + " bytes)");
  }
  if (r.remaining() > payload) throw FormatError(what + ": trailing bytes after payload");
  m.rows.resize(count, Embedding(m.dim));
  for (auto& row : m.rows) r.get_f32s(row);
  return m;
}

void write_embedding_matrix(const std::string& path, std::span<const Embedding> rows, std::uint32_t dim) {
  io::write_file(path, encode_embedding_matrix(rows, dim));
}

EmbeddingMatrix read_embedding_matrix(const std::string& path) {
  return decode_embedding_matrix(io::read_file(path), path);
}

void write_id_file(const std::string& path, std::span<const std::string> ids) {
  std::string out;
  for (const auto& id : ids) {
    if (id.find_first_of("\r\n") != std::string::npos) throw ValidationError("id contains a line break: '" + id + "'");
    out += id;
    out += '\n';
  }
  io::write_file(path, out);
}

std::vector<std::string> read_id_file(const std::string& path) {
  std::vector<std::string> ids;
  std::istringstream in(io::read_file(path));
  std::string line;
  while (std::getline(in, line)) ids.push_back(line);
  return ids;
}

// ---------------------------------------------------------------------------
// Store directories

namespace {

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

template <typename Record>
void save_side(const std::string& dir, const std::string& prefix, const std::vector<Record>& records,
               std::uint32_t image_dim, std::uint32_t text_dim) {
  std::vector<std::string> ids;
  std::vector<Embedding> img;
  std::vector<std::string> text_ids;
  std::vector<Embedding> txt;
  std::vector<ordered_json> captions;
  std::vector<ordered_json> coords;
  for (const auto& r : records) {
    ids.push_back(r.id);
    img.push_back(r.image_emb);
    if (r.text_emb) {
      text_ids.push_back(r.id);
      txt.push_back(*r.text_emb);
    }
    if (r.caption) captions.push_back(ordered_json{{"id", r.id}, {"caption", *r.caption}});
    if (r.coord) coords.push_back(ordered_json{{"id", r.id}, {"lat", r.coord->lat}, {"lon", r.coord->lon}});
  }
  write_embedding_matrix(path_in(dir, prefix + ".img.gvlm"), img, image_dim);
  write_id_file(path_in(dir, prefix + ".img.ids"), ids);
  write_embedding_matrix(path_in(dir, prefix + ".txt.gvlm"), txt, text_dim);
  write_id_file(path_in(dir, prefix + ".txt.ids"), text_ids);
  jsonl::write(path_in(dir, prefix + ".captions.jsonl"), captions);
  jsonl::write(path_in(dir, prefix + ".coords.jsonl"), coords);
}

struct SideFiles {
  std::vector<std::string> ids;
  std::vector<Embedding> img;
  std::unordered_map<std::string, Embedding> txt;
  std::unordered_map<std::string, std::string> captions;
  std::unordered_map<std::string, GeoCoord> coords;
};

SideFiles load_side(const std::string& dir, const std::string& prefix, std::uint32_t image_dim,
                    std::uint32_t text_dim) {
  SideFiles s;
  const auto img_path = path_in(dir, prefix + ".img.gvlm");
  auto img = read_embedding_matrix(img_path);
  s.ids = read_id_file(path_in(dir, prefix + ".img.ids"));
  if (img.dim != image_dim) throw FormatError(img_path + ": dim disagrees with manifest");
  if (img.rows.size() != s.ids.size()) throw FormatError(img_path + ": row count disagrees with id sidecar");
  s.img = std::move(img.rows);

  const auto txt_path = path_in(dir, prefix + ".txt.gvlm");
  auto txt = read_embedding_matrix(txt_path);
  auto txt_ids = read_id_file(path_in(dir, prefix + ".txt.ids"));
  if (txt.dim != text_dim) throw FormatError(txt_path + ": dim disagrees with manifest");
  if (txt.rows.size() != txt_ids.size()) throw FormatError(txt_path + ": row count disagrees with id sidecar");
  for (std::size_t i = 0; i < txt_ids.size(); ++i) s.txt.emplace(txt_ids[i], std::move(txt.rows[i]));

  const auto cap_path = path_in(dir, prefix + ".captions.jsonl");
  jsonl::for_each(cap_path, [&](const json& row, std::size_t line) {
    try {
      s.captions.emplace(row.at("id").get<std::string>(), row.at("caption").get<std::string>());
    } catch (const json::exception& e) {
      throw ValidationError(located(cap_path, line, "", e.what()));
    }
  });
  const auto coord_path = path_in(dir, prefix + ".coords.jsonl");
  jsonl::for_each(coord_path, [&](const json& row, std::size_t line) {
    try {
      s.coords.emplace(row.at("id").get<std::string>(),
                       GeoCoord{row.at("lat").get<double>(), row.at("lon").get<double>()});
    } catch (const json::exception& e) {
      throw ValidationError(located(coord_path, line, "", e.what()));
    }
  });
  return s;
}

template <typename Record>
Record assemble(SideFiles& s, std::size_t i) {
  Record r;
  r.id = s.ids[i];
  r.image_emb = std::move(s.img[i]);
  if (auto it = s.txt.find(r.id); it != s.txt.end()) r.text_emb = std::move(it->second);
  if (auto it = s.captions.find(r.id); it != s.captions.end()) r.caption = it->second;
  if (auto it = s.coords.find(r.id); it != s.coords.end()) r.coord = it->second;
  return r;
}

}  // namespace

void save_store(const Store& store, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create store directory '" + dir + "': " + ec.message());
  save_side(dir, "references", store.references(), store.image_dim(), store.text_dim());
  save_side(dir, "queries", store.queries(), store.image_dim(), store.text_dim());
  std::vector<ordered_json> truth;
  for (const auto& q : store.queries()) {
    ordered_json row{{"id", q.id}, {"ground_truth", q.ground_truth}};
    if (!q.semi_positives.empty()) row["semi_positives"] = q.semi_positives;
    truth.push_back(std::move(row));
  }
  jsonl::write(path_in(dir, "queries.truth.jsonl"), truth);
  io::write_file(path_in(dir, "manifest.txt"), manifest_to_text(store.manifest()));
}

Store load_store(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("store directory '" + dir + "' does not exist");
  const auto manifest = read_manifest(path_in(dir, "manifest.txt"));
  auto refs = load_side(dir, "references", manifest.image_dim, manifest.text_dim);
  auto qs = load_side(dir, "queries", manifest.image_dim, manifest.text_dim);
  if (refs.ids.size() != manifest.reference_count || qs.ids.size() != manifest.query_count) {
    throw FormatError(dir + ": record counts disagree with manifest");
  }
  std::vector<ReferenceRecord> references;
  references.reserve(refs.ids.size());
  for (std::size_t i = 0; i < refs.ids.size(); ++i) references.push_back(assemble<ReferenceRecord>(refs, i));
  std::vector<QueryRecord> queries;
  queries.reserve(qs.ids.size());
  for (std::size_t i = 0; i < qs.ids.size(); ++i) queries.push_back(assemble<QueryRecord>(qs, i));

  std::unordered_map<std::string, std::size_t> qpos;
  for (std::size_t i = 0; i < queries.size(); ++i) qpos.emplace(queries[i].id, i);
  const auto truth_path = path_in(dir, "queries.truth.jsonl");
  jsonl::for_each(truth_path, [&](const json& row, std::size_t line) {
    try {
      const auto id = row.at("id").get<std::string>();
      auto it = qpos.find(id);
      if (it == qpos.end()) throw ValidationError(located(truth_path, line, id, "unknown query"));
      queries[it->second].ground_truth = row.at("ground_truth").get<std::vector<std::string>>();
      if (row.contains("semi_positives")) {
        queries[it->second].semi_positives = row.at("semi_positives").get<std::vector<std::string>>();
      }
    } catch (const json::exception& e) {
      throw ValidationError(located(truth_path, line, "", e.what()));
    }
  });
  return Store(manifest.image_dim, manifest.text_dim, std::move(references), std::move(queries));
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

Embedding parse_vector(const json& value, const std::string& file, std::size_t line, const std::string& id,
                       const std::string& field, std::size_t dim) {
  if (!value.is_array()) throw ValidationError(located(file, line, id, "'" + field + "' must be an array"));
  Embedding v;
  v.reserve(value.size());
  for (const auto& x : value) {
    if (!x.is_number()) throw ValidationError(located(file, line, id, "'" + field + "' holds a non-number"));
    v.push_back(x.get<float>());
  }
  if (auto p = embedding_problem(v, dim); !p.empty()) {
    throw ValidationError(located(file, line, id, field + " " + p));
  }
  return v;
}

std::string row_id(const json& row, const std::string& file, std::size_t line) {
  auto it = row.find("id");
  if (it == row.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw ValidationError(located(file, line, "", "row lacks a non-empty string 'id'"));
  }
  return it->get<std::string>();
}

template <typename Record>
std::vector<Record> ingest_side(const IngestSide& side, const StoreManifest& manifest, bool is_query,
                                std::uint64_t expected_count) {
  const std::string kind = is_query ? "query" : "reference";
  std::vector<Record> records;
  std::unordered_map<std::string, std::size_t> index;

  jsonl::for_each(side.embeddings, [&](const json& row, std::size_t line) {
    Record r;
    r.id = row_id(row, side.embeddings, line);
    if (index.contains(r.id)) throw ValidationError(located(side.embeddings, line, r.id, "duplicate " + kind + " id"));
    if (!row.contains("image")) throw ValidationError(located(side.embeddings, line, r.id, "missing 'image'"));
    r.image_emb = parse_vector(row["image"], side.embeddings, line, r.id, "image", manifest.image_dim);
    if (all_zero(r.image_emb)) {
      throw ValidationError(located(side.embeddings, line, r.id, "image embedding has zero norm"));
    }
    if (row.contains("text") && !row["text"].is_null()) {
      r.text_emb = parse_vector(row["text"], side.embeddings, line, r.id, "text", manifest.text_dim);
    }
    if constexpr (std::is_same_v<Record, QueryRecord>) {
      try {
        r.ground_truth = row.at("ground_truth").get<std::vector<std::string>>();
        if (row.contains("semi_positives")) r.semi_positives = row["semi_positives"].get<std::vector<std::string>>();
      } catch (const json::exception&) {
        throw ValidationError(located(side.embeddings, line, r.id, "'ground_truth' must be an array of ids"));
      }
      if (r.ground_truth.empty()) throw ValidationError(located(side.embeddings, line, r.id, "empty ground_truth"));
    }
    index.emplace(r.id, records.size());
    records.push_back(std::move(r));
  });

  if (records.size() != expected_count) {
    throw ValidationError(side.embeddings + ": " + std::to_string(records.size()) + " " + kind +
                          " rows, manifest declares " + std::to_string(expected_count));
  }

  auto lookup = [&](const std::string& file, std::size_t line, const std::string& id) -> Record& {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError(located(file, line, id, "no " + kind + " with this id"));
    return records[it->second];
  };

  if (!side.captions.empty()) {
    jsonl::for_each(side.captions, [&](const json& row, std::size_t line) {
      const auto id = row_id(row, side.captions, line);
      auto& r = lookup(side.captions, line, id);
      if (r.caption) throw ValidationError(located(side.captions, line, id, "duplicate caption"));
      auto it = row.find("caption");
      if (it == row.end() || !it->is_string()) throw ValidationError(located(side.captions, line, id, "missing 'caption'"));
      r.caption = it->get<std::string>();
    });
  }
  if (!side.coords.empty()) {
    jsonl::for_each(side.coords, [&](const json& row, std::size_t line) {
      const auto id = row_id(row, side.coords, line);
      auto& r = lookup(side.coords, line, id);
      if (r.coord) throw ValidationError(located(side.coords, line, id, "duplicate coordinate"));
      if (!row.contains("lat") || !row.contains("lon") || !row["lat"].is_number() || !row["lon"].is_number()) {
        throw ValidationError(located(side.coords, line, id, "'lat' and 'lon' must be numbers"));
      }
      GeoCoord c{row["lat"].get<double>(), row["lon"].get<double>()};
      if (!is_valid(c)) throw ValidationError(located(side.coords, line, id, "coordinate out of range"));
      r.coord = c;
    });
  }
  return records;
}

}  // namespace

Store ingest(const IngestSources& sources, const StoreManifest& manifest) {
  if (manifest.format_version != kFormatVersion) throw ValidationError("unsupported manifest format_version");
  if (manifest.image_dim == 0 || manifest.text_dim == 0) throw ValidationError("manifest dimensions must be positive");
  auto refs = ingest_side<ReferenceRecord>(sources.references, manifest, false, manifest.reference_count);
  auto queries = ingest_side<QueryRecord>(sources.queries, manifest, true, manifest.query_count);

  std::set<std::string> ref_ids;
  for (const auto& r : refs) ref_ids.insert(r.id);
  for (const auto& q : queries) {
    for (const auto& g : q.ground_truth) {
      if (!ref_ids.contains(g)) {
        throw ValidationError(sources.queries.embeddings + ": id '" + q.id + "': ground-truth id '" + g +
                              "' does not resolve to a reference");
      }
    }
  }
  return Store(manifest.image_dim, manifest.text_dim, std::move(refs), std::move(queries));
}

Store ingest_to(const IngestSources& sources, const StoreManifest& manifest, const std::string& out_dir) {
  auto store = ingest(sources, manifest);
  save_store(store, out_dir);
  return store;
}

// ---------------------------------------------------------------------------

std::vector<EvalInstance> build_eval_instances(const QueryRecord& query, const Store& store) {
  if (query.ground_truth.empty()) throw ValidationError("query '" + query.id + "' has an empty ground-truth set");
  std::set<std::string> positives(query.ground_truth.begin(), query.ground_truth.end());
  for (const auto& p : positives) store.reference(p);

  std::vector<std::string> all_ids;
  all_ids.reserve(store.references().size());
  for (const auto& r : store.references()) all_ids.push_back(r.id);
  std::sort(all_ids.begin(), all_ids.end());

  std::vector<EvalInstance> out;
  for (const auto& positive : positives) {
    EvalInstance inst{query.id, {}, positive};
    inst.candidate_pool.reserve(all_ids.size() - positives.size() + 1);
    for (const auto& id : all_ids) {
      if (id == positive || !positives.contains(id)) inst.candidate_pool.push_back(id);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace cvrank::geostore
