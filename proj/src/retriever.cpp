#include "cvrank/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <thread>

#include "cvrank/binary_io.hpp"
#include "cvrank/error.hpp"
#include "cvrank/jsonl.hpp"

namespace cvrank::retriever {

namespace {

// Every score in this module goes through these two helpers in the same
// order of operations, so cached and uncached paths agree bit-for-bit.
double dot(std::span<const float> u, std::span<const float> v, Accumulation acc) {
  if (acc == Accumulation::kFloat32) {
    float s = 0.0f;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += static_cast<double>(u[i]) * static_cast<double>(v[i]);
  return s;
}

double from_parts(double uv, double uu, double vv) {
  // sqrt of the product keeps cosine(u, u) exactly 1.
  const double c = uv / std::sqrt(uu * vv);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace

double cosine(std::span<const float> u, std::span<const float> v, Accumulation acc) {
  if (u.size() != v.size()) {
    throw ValidationError("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                          std::to_string(v.size()) + ")");
  }
  const double uu = dot(u, u, acc);
  const double vv = dot(v, v, acc);
  if (uu == 0.0 || vv == 0.0) throw ValidationError("cosine: zero-norm vector");
  return from_parts(dot(u, v, acc), uu, vv);
}

ReferenceIndex::ReferenceIndex(const geostore::Store& store, Accumulation acc)
    : dim_(store.image_dim()), acc_(acc) {
  const auto& refs = store.references();
  ids_.reserve(refs.size());
  values_.reserve(refs.size() * dim_);
  norms2_.reserve(refs.size());
  for (const auto& r : refs) {
    ids_.push_back(r.id);
    values_.insert(values_.end(), r.image_emb.begin(), r.image_emb.end());
    norms2_.push_back(dot(r.image_emb, r.image_emb, acc_));
  }
}

std::size_t ReferenceIndex::position(const std::string& id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw ValidationError("unknown reference id '" + id + "'");
  return static_cast<std::size_t>(it - ids_.begin());
}

double ReferenceIndex::norm2(std::span<const float> v) const { return dot(v, v, acc_); }

double ReferenceIndex::score(std::span<const float> query, double query_norm2, std::size_t i) const {
  std::span<const float> row(values_.data() + i * dim_, dim_);
  return from_parts(dot(query, row, acc_), query_norm2, norms2_[i]);
}

Ranking top_k(std::span<const float> query_emb, const ReferenceIndex& index, std::size_t k,
              const std::vector<bool>* excluded) {
  if (k == 0) throw ValidationError("top_k: k must be at least 1");
  if (index.size() == 0) throw ValidationError("top_k: reference store is empty");
  if (query_emb.size() != index.dim()) {
    throw ValidationError("top_k: query dim " + std::to_string(query_emb.size()) + " != store image_dim " +
                          std::to_string(index.dim()));
  }
  const double qq = index.norm2(query_emb);
  if (qq == 0.0) throw ValidationError("top_k: zero-norm query embedding");

  struct Cand {
    double score;
    std::size_t i;
  };
  auto better = [&](const Cand& a, const Cand& b) { return ranks_before(a.score, index.id(a.i), b.score, index.id(b.i)); };
  // Max-heap on "better" keeps the worst retained candidate on top.
  std::priority_queue<Cand, std::vector<Cand>, decltype(better)> heap(better);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (excluded != nullptr && (*excluded)[i]) continue;
    Cand c{index.score(query_emb, qq, i), i};
    if (heap.size() < k) {
      heap.push(c);
    } else if (better(c, heap.top())) {
      heap.pop();
      heap.push(c);
    }
  }
  std::vector<Cand> kept;
  kept.reserve(heap.size());
  while (!heap.empty()) {
    kept.push_back(heap.top());
    heap.pop();
  }
  std::sort(kept.begin(), kept.end(), better);

  Ranking out;
  out.k = k;
  out.entries.reserve(kept.size());
  for (const auto& c : kept) out.entries.push_back({index.id(c.i), c.score});
  return out;
}

Ranking top_k(const geostore::QueryRecord& query, const ReferenceIndex& index, std::size_t k) {
  auto r = top_k(query.image_emb, index, k);
  r.query_id = query.id;
  return r;
}

Ranking brute_force_rank(std::span<const float> query_emb, const geostore::Store& store, Accumulation acc) {
  const auto& refs = store.references();
  if (refs.empty()) throw ValidationError("brute_force_rank: reference store is empty");
  if (query_emb.size() != store.image_dim()) throw ValidationError("brute_force_rank: query dimension mismatch");
  Ranking out;
  out.k = refs.size();
  out.entries.reserve(refs.size());
  for (const auto& r : refs) out.entries.push_back({r.id, cosine(query_emb, r.image_emb, acc)});
  std::sort(out.entries.begin(), out.entries.end(), [](const RankEntry& a, const RankEntry& b) {
    return ranks_before(a.score, a.reference_id, b.score, b.reference_id);
  });
  return out;
}

std::vector<Ranking> retrieve_all(const geostore::Store& store, std::size_t k, std::size_t threads,
                                  Accumulation acc) {
  const ReferenceIndex index(store, acc);
  const auto& queries = store.queries();
  std::vector<Ranking> out(queries.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, queries.size()));
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < queries.size(); i += stride) out[i] = top_k(queries[i], index, k);
  };
  if (threads <= 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<Ranking> retrieve_instances(const geostore::Store& store, std::size_t k, Accumulation acc) {
  const ReferenceIndex index(store, acc);
  std::vector<Ranking> out;
  for (const auto& q : store.queries()) {
    for (const auto& inst : geostore::build_eval_instances(q, store)) {
      std::vector<bool> excluded(index.size(), false);
      for (const auto& other : q.ground_truth) {
        if (other != inst.positive_id) excluded[index.position(other)] = true;
      }
      auto r = top_k(q.image_emb, index, k, &excluded);
      r.query_id = q.id;
      r.instance_positive = inst.positive_id;
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

std::string rankings_to_jsonl(const std::vector<Ranking>& rankings) {
  std::vector<jsonl::ordered_json> rows;
  rows.reserve(rankings.size());
  for (const auto& r : rankings) {
    jsonl::ordered_json row;
    row["query_id"] = r.query_id;
    if (r.instance_positive) row["positive_id"] = *r.instance_positive;
    row["k"] = r.k;
    auto entries = jsonl::ordered_json::array();
    for (const auto& e : r.entries) entries.push_back(jsonl::ordered_json::array({e.reference_id, e.score}));
    row["entries"] = std::move(entries);
    if (r.reranked) row["reranked"] = true;
    rows.push_back(std::move(row));
  }
  return jsonl::dump_lines(rows);
}

void write_rankings(const std::string& path, const std::vector<Ranking>& rankings) {
  io::write_file(path, rankings_to_jsonl(rankings));
}

std::vector<Ranking> read_rankings(const std::string& path) {
  std::vector<Ranking> out;
  jsonl::for_each(path, [&](const nlohmann::json& row, std::size_t line) {
    Ranking r;
    try {
      r.query_id = row.at("query_id").get<std::string>();
      if (row.contains("positive_id")) r.instance_positive = row["positive_id"].get<std::string>();
      r.reranked = row.value("reranked", false);
      for (const auto& e : row.at("entries")) {
        if (!e.is_array() || e.size() != 2) throw ValidationError("entry must be [id, score]");
        r.entries.push_back({e[0].get<std::string>(), e[1].get<double>()});
      }
      r.k = row.contains("k") ? row["k"].get<std::size_t>() : r.entries.size();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(located(path, line, r.query_id, std::string("malformed ranking: ") + e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(located(path, line, r.query_id, e.what()));
    }
    if (r.k == 0 || r.entries.size() > r.k) {
      throw ValidationError(located(path, line, r.query_id, "entry count exceeds k"));
    }
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace cvrank::retriever
