#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvrank/checkpoint.hpp"
#include "cvrank/geostore.hpp"
#include "cvrank/reranker.hpp"
#include "cvrank/retriever.hpp"

namespace cvrank::trainer {

using reranker::Params;

enum class OptimizerKind { kSgd, kAdam };
// Which quantity the hinge compares: sigmoid scores (as written) or raw logits.
enum class LossOn { kScores, kLogits };
// Whether semi-positive references stay in a sample's negative set.
enum class SemiPositiveRegime { kNegative, kExcluded };

struct TrainConfig {
  double margin = 1.0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::uint64_t shuffle_seed = 0;
  std::optional<double> grad_clip;  // global L2 norm
  LossOn loss_on = LossOn::kScores;
  double val_split = 0.2;       // fraction of queries held out
  std::string checkpoint_dir;   // empty: no per-epoch checkpoints

  void validate() const;
};

struct TrainingSample {
  std::string query_id;
  std::vector<std::string> candidate_ids;  // phase-1 order
  std::size_t positive_index = 0;

  friend bool operator==(const TrainingSample&, const TrainingSample&) = default;
};

struct SampleSet {
  std::vector<TrainingSample> samples;
  std::size_t skipped = 0;  // instances whose positive was not retrieved
};

// One sample per (query, positive) whose positive appears in the ranking.
// Other positives of a multi-positive query are dropped from the candidate list.
SampleSet build_training_samples(const geostore::Store& store, const std::vector<retriever::Ranking>& rankings,
                                 SemiPositiveRegime regime = SemiPositiveRegime::kNegative);

void write_samples(const std::string& path, const std::vector<TrainingSample>& samples);
std::vector<TrainingSample> read_samples(const std::string& path);

// (1/|N|) sum_i max(0, m - (pos - neg_i)). Throws on an empty negative set.
double margin_loss(double pos_score, std::span<const double> neg_scores, double margin);

// Forward pass only; returns the sample's loss.
template <typename T>
T sample_loss(const TrainingSample& sample, const Params<T>& params, const geostore::Store& store, double margin,
              LossOn loss_on);

// Adds the sample's analytic gradient into `grads` and returns its loss.
// Negatives whose hinge is inactive contribute exactly nothing.
template <typename T>
T accumulate_loss_and_gradients(const TrainingSample& sample, const Params<T>& params, const geostore::Store& store,
                                double margin, LossOn loss_on, Params<T>& grads);

template <typename T>
struct LossAndGradients {
  T loss;
  Params<T> grads;
};

template <typename T>
LossAndGradients<T> loss_and_gradients(const TrainingSample& sample, const Params<T>& params,
                                       const geostore::Store& store, double margin, LossOn loss_on);

// Mean gradient over `batch`, accumulated in ascending sample order so the
// result does not depend on the order of `batch`. Returns the mean loss.
double batch_gradient(std::span<const TrainingSample> samples, std::vector<std::size_t> batch,
                      const Params<float>& params, const geostore::Store& store, double margin, LossOn loss_on,
                      Params<float>& grads);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  std::uint64_t step = 0;
  Params<float> first_moment;
  Params<float> second_moment;
};

OptimizerState make_optimizer_state(const Params<float>& params, const TrainConfig& config);
void optimizer_step(Params<float>& params, const Params<float>& grads, OptimizerState& state,
                    const TrainConfig& config);

// Optimizer state in checkpoint tensor framing ("adam.step", "adam.m.<name>", ...).
std::vector<reranker::NamedTensor> optimizer_state_tensors(const OptimizerState& state);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_r1;
  std::optional<double> val_r5;
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  std::vector<std::string> validation_query_ids;  // sorted

  // Equality on everything except wall-clock timings.
  bool same_results(const TrainReport& other) const;
};

struct TrainResult {
  Params<float> params;
  TrainReport report;
};

TrainResult train(const std::vector<TrainingSample>& samples, const geostore::Store& store,
                  const reranker::RerankerConfig& model_config, const TrainConfig& config);

// Fraction of samples whose positive lands within the top `depth` after scoring.
double sample_recall(std::span<const TrainingSample> samples, const Params<float>& params,
                     const geostore::Store& store, std::size_t depth);

// Line-delimited epoch records plus a CSV summary.
void write_train_report(const std::string& jsonl_path, const std::string& csv_path, const TrainReport& report);

// ---- Finite-difference verification ----

struct TensorCheck {
  std::string name;
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-6)
  double analytic_norm = 0.0;
};

struct GradCheckResult {
  std::vector<TensorCheck> tensors;
  double max_relative_error = 0.0;
  double loss = 0.0;
};

struct GradCheckOptions {
  double step = 1e-4;
  double margin = 1.0;
  LossOn loss_on = LossOn::kScores;
  std::size_t candidates = 10;
  reranker::RerankerConfig model;  // small dims by default, see gradient_check()
};

GradCheckOptions default_gradcheck_options(std::uint64_t seed);

// Builds a random store, sample and parameter set from `seed`, then compares
// analytic gradients against central differences in 64-bit arithmetic.
GradCheckResult gradient_check(std::uint64_t seed, const GradCheckOptions& options);

}  // namespace cvrank::trainer
