#include "cvrank/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cvrank/binary_io.hpp"
#include "cvrank/error.hpp"
#include "cvrank/jsonl.hpp"

namespace cvrank::trainer {

using reranker::Side;
using reranker::SideTrace;
using reranker::Vec;

void TrainConfig::validate() const {
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw ValidationError("margin must be finite and >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be finite and >= 0");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (!(val_split >= 0.0 && val_split < 1.0)) throw ValidationError("val_split must be in [0, 1)");
  if (grad_clip && !(*grad_clip > 0.0)) throw ValidationError("grad_clip must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ValidationError("adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
}

// ---------------------------------------------------------------------------
// Samples

SampleSet build_training_samples(const geostore::Store& store, const std::vector<retriever::Ranking>& rankings,
                                 SemiPositiveRegime regime) {
  SampleSet out;
  for (const auto& ranking : rankings) {
    const auto& q = store.query(ranking.query_id);
    std::vector<std::string> positives;
    if (ranking.instance_positive) {
      positives = {*ranking.instance_positive};
    } else {
      positives = q.ground_truth;
    }
    const std::set<std::string> all_positives(q.ground_truth.begin(), q.ground_truth.end());
    const std::set<std::string> semi(q.semi_positives.begin(), q.semi_positives.end());

    for (const auto& positive : positives) {
      TrainingSample s;
      s.query_id = q.id;
      bool found = false;
      for (const auto& e : ranking.entries) {
        const auto& id = e.reference_id;
        if (id == positive) {
          s.positive_index = s.candidate_ids.size();
          found = true;
        } else if (all_positives.contains(id)) {
          continue;
        } else if (regime == SemiPositiveRegime::kExcluded && semi.contains(id)) {
          continue;
        }
        s.candidate_ids.push_back(id);
      }
      if (!found || s.candidate_ids.size() < 2) {
        ++out.skipped;
        continue;
      }
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

void write_samples(const std::string& path, const std::vector<TrainingSample>& samples) {
  std::vector<jsonl::ordered_json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) {
    rows.push_back(jsonl::ordered_json{
        {"query_id", s.query_id}, {"candidates", s.candidate_ids}, {"positive_index", s.positive_index}});
  }
  jsonl::write(path, rows);
}

std::vector<TrainingSample> read_samples(const std::string& path) {
  std::vector<TrainingSample> out;
  jsonl::for_each(path, [&](const nlohmann::json& row, std::size_t line) {
    TrainingSample s;
    try {
      s.query_id = row.at("query_id").get<std::string>();
      s.candidate_ids = row.at("candidates").get<std::vector<std::string>>();
      s.positive_index = row.at("positive_index").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(located(path, line, s.query_id, std::string("malformed sample: ") + e.what()));
    }
    if (s.positive_index >= s.candidate_ids.size() || s.candidate_ids.size() < 2) {
      throw ValidationError(located(path, line, s.query_id, "positive_index out of range or no negatives"));
    }
    out.push_back(std::move(s));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Loss

double margin_loss(double pos_score, std::span<const double> neg_scores, double margin) {
  if (neg_scores.empty()) throw ValidationError("margin_loss: empty negative set");
  double sum = 0.0;
  for (double neg : neg_scores) sum += std::max(0.0, margin - (pos_score - neg));
  return sum / static_cast<double>(neg_scores.size());
}

namespace {

template <typename T>
T sigmoid_t(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
struct SampleForward {
  SideTrace<T> query;
  std::vector<SideTrace<T>> refs;
  Vec<T> wq;
  std::vector<T> scores;  // sigmoid(logit)
  std::vector<T> values;  // what the hinge compares
};

template <typename T>
SampleForward<T> forward_sample(const TrainingSample& sample, const Params<T>& params, const geostore::Store& store,
                                LossOn loss_on) {
  if (sample.candidate_ids.size() < 2 || sample.positive_index >= sample.candidate_ids.size()) {
    throw ValidationError("training sample for '" + sample.query_id + "' needs a positive and at least one negative");
  }
  const auto& q = store.query(sample.query_id);
  if (!q.text_emb) throw ValidationError("query '" + q.id + "' has no text embedding");
  SampleForward<T> f;
  f.query = reranker::forward_side<T>(q.image_emb, *q.text_emb, params, Side::kQuery);
  f.wq = params.score_weight * f.query.out;
  const T bias = params.score_bias[0];
  for (const auto& id : sample.candidate_ids) {
    const auto& r = store.reference(id);
    if (!r.text_emb) throw ValidationError("reference '" + r.id + "' has no text embedding");
    f.refs.push_back(reranker::forward_side<T>(r.image_emb, *r.text_emb, params, Side::kReference));
    const T logit = f.wq.dot(f.refs.back().out) + bias;
    const T s = sigmoid_t(logit);
    f.scores.push_back(s);
    f.values.push_back(loss_on == LossOn::kScores ? s : logit);
  }
  return f;
}

// Hinge over `values`; fills d(loss)/d(value) when `dvalues` is given.
template <typename T>
T hinge(const std::vector<T>& values, std::size_t pos, double margin, std::vector<T>* dvalues) {
  const T m = static_cast<T>(margin);
  const T inv_n = T(1) / static_cast<T>(values.size() - 1);
  T loss = 0;
  if (dvalues) dvalues->assign(values.size(), T(0));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i == pos) continue;
    const T slack = m - (values[pos] - values[i]);
    // NaN slack counts as active so a poisoned forward pass surfaces in the loss.
    if (!(slack <= T(0))) {
      loss += slack;
      if (dvalues) {
        (*dvalues)[i] += inv_n;
        (*dvalues)[pos] -= inv_n;
      }
    }
  }
  return loss * inv_n;
}

template <typename T>
void scale_all(Params<T>& p, T factor) {
  for (auto& t : p.tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] *= factor;
  }
}

}  // namespace

template <typename T>
T sample_loss(const TrainingSample& sample, const Params<T>& params, const geostore::Store& store, double margin,
              LossOn loss_on) {
  const auto f = forward_sample(sample, params, store, loss_on);
  return hinge<T>(f.values, sample.positive_index, margin, nullptr);
}

template <typename T>
T accumulate_loss_and_gradients(const TrainingSample& sample, const Params<T>& params, const geostore::Store& store,
                                double margin, LossOn loss_on, Params<T>& grads) {
  const auto f = forward_sample(sample, params, store, loss_on);
  std::vector<T> dvalues;
  const T loss = hinge<T>(f.values, sample.positive_index, margin, &dvalues);

  Vec<T> d_query = Vec<T>::Zero(f.query.out.size());
  bool any = false;
  for (std::size_t c = 0; c < f.refs.size(); ++c) {
    if (dvalues[c] == T(0)) continue;
    any = true;
    const T s = f.scores[c];
    const T dlogit = loss_on == LossOn::kScores ? dvalues[c] * s * (T(1) - s) : dvalues[c];
    const auto& ref_out = f.refs[c].out;
    // logit = ref_out . (W q_out) + b
    grads.score_weight.noalias() += dlogit * ref_out * f.query.out.transpose();
    grads.score_bias[0] += dlogit;
    d_query.noalias() += dlogit * (params.score_weight.transpose() * ref_out);
    const Vec<T> d_ref = dlogit * f.wq;
    reranker::backward_side(f.refs[c], d_ref, params, grads);
  }
  if (any) reranker::backward_side(f.query, d_query, params, grads);
  return loss;
}

template <typename T>
LossAndGradients<T> loss_and_gradients(const TrainingSample& sample, const Params<T>& params,
                                       const geostore::Store& store, double margin, LossOn loss_on) {
  LossAndGradients<T> out{T(0), params.zeros_like()};
  out.loss = accumulate_loss_and_gradients(sample, params, store, margin, loss_on, out.grads);
  return out;
}

template float sample_loss<float>(const TrainingSample&, const Params<float>&, const geostore::Store&, double, LossOn);
template double sample_loss<double>(const TrainingSample&, const Params<double>&, const geostore::Store&, double,
                                    LossOn);
template float accumulate_loss_and_gradients<float>(const TrainingSample&, const Params<float>&,
                                                    const geostore::Store&, double, LossOn, Params<float>&);
template double accumulate_loss_and_gradients<double>(const TrainingSample&, const Params<double>&,
                                                      const geostore::Store&, double, LossOn, Params<double>&);
template LossAndGradients<float> loss_and_gradients<float>(const TrainingSample&, const Params<float>&,
                                                           const geostore::Store&, double, LossOn);
template LossAndGradients<double> loss_and_gradients<double>(const TrainingSample&, const Params<double>&,
                                                             const geostore::Store&, double, LossOn);

double batch_gradient(std::span<const TrainingSample> samples, std::vector<std::size_t> batch,
                      const Params<float>& params, const geostore::Store& store, double margin, LossOn loss_on,
                      Params<float>& grads) {
  if (batch.empty()) throw ValidationError("batch_gradient: empty batch");
  std::sort(batch.begin(), batch.end());
  grads = params.zeros_like();
  double loss = 0.0;
  for (auto i : batch) loss += accumulate_loss_and_gradients(samples[i], params, store, margin, loss_on, grads);
  const float inv = 1.0f / static_cast<float>(batch.size());
  scale_all(grads, inv);
  return loss / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState make_optimizer_state(const Params<float>& params, const TrainConfig& config) {
  OptimizerState s;
  s.kind = config.optimizer;
  if (s.kind == OptimizerKind::kAdam) {
    s.first_moment = params.zeros_like();
    s.second_moment = params.zeros_like();
  }
  return s;
}

void optimizer_step(Params<float>& params, const Params<float>& grads, OptimizerState& state,
                    const TrainConfig& config) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (p.size() != g.size()) throw ValidationError("optimizer_step: gradient set does not match parameters");
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t].rows != g[t].rows || p[t].cols != g[t].cols) {
      throw ValidationError("optimizer_step: shape mismatch on '" + p[t].name + "'");
    }
  }
  ++state.step;
  if (state.kind == OptimizerKind::kSgd) {
    for (std::size_t t = 0; t < p.size(); ++t) {
      for (Eigen::Index i = 0; i < p[t].size(); ++i) {
        p[t].data[i] = static_cast<float>(p[t].data[i] - config.lr * g[t].data[i]);
      }
    }
    return;
  }
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  if (m.size() != p.size()) throw ValidationError("optimizer_step: Adam state does not match parameters");
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (Eigen::Index i = 0; i < p[t].size(); ++i) {
      const double gi = g[t].data[i];
      const double mi = b1 * m[t].data[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[t].data[i] + (1.0 - b2) * gi * gi;
      m[t].data[i] = static_cast<float>(mi);
      v[t].data[i] = static_cast<float>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      p[t].data[i] = static_cast<float>(p[t].data[i] - config.lr * m_hat / (std::sqrt(v_hat) + config.adam_eps));
    }
  }
}

std::vector<reranker::NamedTensor> optimizer_state_tensors(const OptimizerState& state) {
  std::vector<reranker::NamedTensor> out;
  const std::string prefix = state.kind == OptimizerKind::kAdam ? "adam" : "sgd";
  out.push_back({prefix + ".step", {}, {static_cast<float>(state.step)}});
  if (state.kind != OptimizerKind::kAdam) return out;
  auto dump = [&](const Params<float>& p, const std::string& tag) {
    for (const auto& t : p.tensors()) {
      reranker::NamedTensor nt;
      nt.name = prefix + "." + tag + "." + t.name;
      if (t.rank >= 1) nt.dims.push_back(static_cast<std::uint32_t>(t.rows));
      if (t.rank == 2) nt.dims.push_back(static_cast<std::uint32_t>(t.cols));
      for (Eigen::Index r = 0; r < t.rows; ++r) {
        for (Eigen::Index c = 0; c < t.cols; ++c) nt.values.push_back(t.data[c * t.rows + r]);
      }
      out.push_back(std::move(nt));
    }
  };
  dump(state.first_moment, "m");
  dump(state.second_moment, "v");
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

bool TrainReport::same_results(const TrainReport& o) const {
  if (train_samples != o.train_samples || val_samples != o.val_samples ||
      validation_query_ids != o.validation_query_ids || epochs.size() != o.epochs.size()) {
    return false;
  }
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = o.epochs[i];
    if (a.epoch != b.epoch || a.mean_loss != b.mean_loss || a.val_r1 != b.val_r1 || a.val_r5 != b.val_r5) return false;
  }
  return true;
}

double sample_recall(std::span<const TrainingSample> samples, const Params<float>& params,
                     const geostore::Store& store, std::size_t depth) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    const auto f = forward_sample(s, params, store, LossOn::kLogits);
    // Rank the positive by logit; ties resolved by id like rerank() does.
    const auto& pos_id = s.candidate_ids[s.positive_index];
    const float pos = f.values[s.positive_index];
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < f.values.size(); ++c) {
      if (c == s.positive_index) continue;
      const double sc = reranker::sigmoid(f.values[c]);
      const double sp = reranker::sigmoid(pos);
      if (retriever::ranks_before(sc, s.candidate_ids[c], sp, pos_id)) ++ahead;
    }
    if (ahead < depth) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

namespace {

void clip_gradients(Params<float>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& t : grads.tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) sq += static_cast<double>(t.data[i]) * t.data[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) scale_all(grads, static_cast<float>(max_norm / norm));
}

std::string epoch_checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03zu.gvck", epoch);
  return buf;
}

}  // namespace

TrainResult train(const std::vector<TrainingSample>& samples, const geostore::Store& store,
                  const reranker::RerankerConfig& model_config, const TrainConfig& config) {
  config.validate();
  model_config.validate();
  if (samples.empty()) throw ValidationError("train: no valid training samples");
  if (model_config.image_dim != store.image_dim() || model_config.text_dim != store.text_dim()) {
    throw ValidationError("train: model dims " + std::to_string(model_config.image_dim) + "/" +
                          std::to_string(model_config.text_dim) + " do not match store dims " +
                          std::to_string(store.image_dim()) + "/" + std::to_string(store.text_dim()));
  }

  // Hold out whole queries so multi-positive instances never straddle the split.
  std::set<std::string> query_set;
  for (const auto& s : samples) query_set.insert(s.query_id);
  std::vector<std::string> query_ids(query_set.begin(), query_set.end());
  std::mt19937_64 split_rng(config.shuffle_seed);
  std::shuffle(query_ids.begin(), query_ids.end(), split_rng);
  const auto n_val = static_cast<std::size_t>(std::floor(config.val_split * static_cast<double>(query_ids.size())));
  std::set<std::string> val_queries(query_ids.end() - static_cast<std::ptrdiff_t>(n_val), query_ids.end());

  std::vector<TrainingSample> train_set;
  std::vector<TrainingSample> val_set;
  for (const auto& s : samples) (val_queries.contains(s.query_id) ? val_set : train_set).push_back(s);
  if (train_set.empty()) throw ValidationError("train: validation split leaves no training samples");

  TrainResult result;
  result.params = reranker::init_params(model_config);
  result.report.train_samples = train_set.size();
  result.report.val_samples = val_set.size();
  result.report.validation_query_ids.assign(val_queries.begin(), val_queries.end());

  auto state = make_optimizer_state(result.params, config);
  std::mt19937_64 order_rng(config.shuffle_seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  Params<float> grads;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_no) {
      const auto end = std::min(order.size(), begin + config.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      const double loss =
          batch_gradient(train_set, batch, result.params, store, config.margin, config.loss_on, grads);
      if (!std::isfinite(loss)) {
        throw ValidationError("train: non-finite loss in epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(batch_no) + " (first query '" + train_set[batch.front()].query_id + "')");
      }
      loss_sum += loss * static_cast<double>(batch.size());
      if (config.grad_clip) clip_gradients(grads, *config.grad_clip);
      optimizer_step(result.params, grads, state, config);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      rec.val_r1 = sample_recall(val_set, result.params, store, 1);
      rec.val_r5 = sample_recall(val_set, result.params, store, 5);
    }
    if (!config.checkpoint_dir.empty()) {
      const auto path = (std::filesystem::path(config.checkpoint_dir) / epoch_checkpoint_name(epoch)).string();
      reranker::write_checkpoint(path, result.params, optimizer_state_tensors(state));
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.report.epochs.push_back(rec);
  }
  return result;
}

void write_train_report(const std::string& jsonl_path, const std::string& csv_path, const TrainReport& report) {
  std::vector<jsonl::ordered_json> rows;
  std::ostringstream csv;
  csv << "epoch,mean_loss,val_r1,val_r5,wall_seconds\n";
  auto opt = [](const std::optional<double>& v) -> jsonl::ordered_json { return v ? jsonl::ordered_json(*v) : nullptr; };
  for (const auto& e : report.epochs) {
    rows.push_back(jsonl::ordered_json{{"epoch", e.epoch},
                                       {"mean_loss", e.mean_loss},
                                       {"val_r1", opt(e.val_r1)},
                                       {"val_r5", opt(e.val_r5)},
                                       {"wall_seconds", e.wall_seconds},
                                       {"train_samples", report.train_samples},
                                       {"val_samples", report.val_samples}});
    char line[256];
    std::snprintf(line, sizeof(line), "%zu,%.9g,%s,%s,%.3f\n", e.epoch, e.mean_loss,
                  e.val_r1 ? std::to_string(*e.val_r1).c_str() : "", e.val_r5 ? std::to_string(*e.val_r5).c_str() : "",
                  e.wall_seconds);
    csv << line;
  }
  jsonl::write(jsonl_path, rows);
  io::write_file(csv_path, csv.str());
}

// ---------------------------------------------------------------------------
// Gradient check

namespace {

// Below this combined norm a tensor's gradient is roundoff; compare absolutely.
constexpr double kGradCheckFloor = 1e-6;

}  // namespace

GradCheckOptions default_gradcheck_options(std::uint64_t seed) {
  GradCheckOptions o;
  o.model.image_dim = 8;
  o.model.text_dim = 6;
  o.model.latent_dim = 5;
  o.model.aligner_layers = 2;
  o.model.aligner_hidden = 7;
  o.model.shared_projections = seed % 2 == 0;
  o.model.init_seed = seed;
  return o;
}

GradCheckResult gradient_check(std::uint64_t seed, const GradCheckOptions& options) {
  const auto& mc = options.model;
  mc.validate();
  if (options.candidates < 2) throw ValidationError("gradient_check needs at least two candidates");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_vec = [&](std::size_t n) {
    geostore::Embedding v(n);
    for (auto& x : v) x = static_cast<float>(normal(rng));
    return v;
  };

  std::vector<geostore::ReferenceRecord> refs;
  TrainingSample sample;
  sample.query_id = "q";
  for (std::size_t c = 0; c < options.candidates; ++c) {
    geostore::ReferenceRecord r;
    r.id = "r" + std::to_string(c);
    r.image_emb = random_vec(mc.image_dim);
    r.text_emb = random_vec(mc.text_dim);
    sample.candidate_ids.push_back(r.id);
    refs.push_back(std::move(r));
  }
  sample.positive_index = static_cast<std::size_t>(rng() % options.candidates);
  geostore::QueryRecord q;
  q.id = "q";
  q.image_emb = random_vec(mc.image_dim);
  q.text_emb = random_vec(mc.text_dim);
  q.ground_truth = {sample.candidate_ids[sample.positive_index]};
  const geostore::Store store(mc.image_dim, mc.text_dim, std::move(refs), {std::move(q)});

  // Perturb every tensor away from its structured initial value so no
  // gradient is trivially zero.
  auto params = reranker::init_params(mc).cast<double>();
  for (auto& t : params.tensors()) {
    const double base = t.name.ends_with(".ln.scale") ? 1.0 : 0.0;
    const double spread = t.rank == 2 ? 0.6 : 0.3;
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = base + spread * normal(rng);
  }

  const auto analytic = loss_and_gradients<double>(sample, params, store, options.margin, options.loss_on);
  GradCheckResult result;
  result.loss = analytic.loss;

  auto p_tensors = params.tensors();
  const auto g_tensors = analytic.grads.tensors();
  for (std::size_t t = 0; t < p_tensors.size(); ++t) {
    auto& pt = p_tensors[t];
    double diff2 = 0.0;
    double a2 = 0.0;
    double n2 = 0.0;
    for (Eigen::Index i = 0; i < pt.size(); ++i) {
      const double saved = pt.data[i];
      pt.data[i] = saved + options.step;
      const double up = sample_loss<double>(sample, params, store, options.margin, options.loss_on);
      pt.data[i] = saved - options.step;
      const double down = sample_loss<double>(sample, params, store, options.margin, options.loss_on);
      pt.data[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = g_tensors[t].data[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    TensorCheck tc;
    tc.name = pt.name;
    tc.analytic_norm = std::sqrt(a2);
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    tc.relative_error = std::sqrt(diff2) / std::max(denom, kGradCheckFloor);
    result.max_relative_error = std::max(result.max_relative_error, tc.relative_error);
    result.tensors.push_back(std::move(tc));
  }
  return result;
}

}  // namespace cvrank::trainer
