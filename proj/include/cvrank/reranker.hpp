#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvrank/geostore.hpp"
#include "cvrank/retriever.hpp"

namespace cvrank::reranker {

struct RerankerConfig {
  std::uint32_t image_dim = 1024;
  std::uint32_t text_dim = 1536;
  std::uint32_t latent_dim = 512;
  std::uint32_t aligner_layers = 2;
  std::uint32_t aligner_hidden = 512;
  double ln_epsilon = 1e-5;
  // When true the query and reference sides share projection weights.
  bool shared_projections = true;
  std::uint64_t init_seed = 0;

  void validate() const;  // throws ValidationError
  friend bool operator==(const RerankerConfig&, const RerankerConfig&) = default;
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct Linear {
  Mat<T> weight;  // out x in
  Vec<T> bias;    // out
};

template <typename T>
struct AlignerBlock {
  Linear<T> linear;
  Vec<T> ln_scale;
  Vec<T> ln_shift;
};

// A named, contiguous view of one parameter tensor. Matrices are column-major
// (Eigen storage); `rows`/`cols` give the logical shape, rank 0 is a scalar.
template <typename T>
struct TensorRef {
  std::string name;
  T* data;
  Eigen::Index rows;
  Eigen::Index cols;
  int rank;

  Eigen::Index size() const { return rows * cols; }
};

// All learnable tensors. The same struct carries gradients and optimizer moments.
template <typename T>
struct Params {
  RerankerConfig config;
  Linear<T> query_img;  // image_dim -> h; both sides when projections are shared
  Linear<T> query_txt;  // text_dim -> h
  Linear<T> ref_img;    // only allocated when projections are separate
  Linear<T> ref_txt;
  std::vector<AlignerBlock<T>> aligner;
  Mat<T> score_weight;  // W, h x h
  Vec<T> score_bias;    // b, size 1

  // Fixed canonical order; checkpoint files and optimizers rely on it.
  std::vector<TensorRef<T>> tensors();
  std::vector<TensorRef<const T>> tensors() const;

  // Same shapes, all zero.
  static Params zeros(const RerankerConfig& config);
  Params zeros_like() const;
  template <typename U>
  Params<U> cast() const;
};

// Glorot-uniform linear maps, zero biases, unit LayerNorm scale, zero shift.
Params<float> init_params(const RerankerConfig& config);

enum class Side { kQuery, kReference };

template <typename T>
Vec<T> project_fuse(std::span<const float> image_emb, std::span<const float> text_emb, const Params<T>& params,
                    Side side);

// aligner_layers blocks of Linear -> LayerNorm -> ReLU.
template <typename T>
Vec<T> align(const Vec<T>& fused, const Params<T>& params);

struct PairInputs {
  std::span<const float> image_emb;
  std::span<const float> text_emb;
};

struct PairScoreTrace {
  Eigen::VectorXd fused_query;
  Eigen::VectorXd fused_ref;
  Eigen::VectorXd aligned_query;
  Eigen::VectorXd aligned_ref;
  double logit = 0.0;
  double score = 0.5;
};

// S = sigmoid((W align(fuse_q)) . align(fuse_r) + b), clamped into the open interval (0, 1).
template <typename T>
PairScoreTrace score_pair_trace(const PairInputs& query, const PairInputs& ref, const Params<T>& params);
template <typename T>
double score_pair(const PairInputs& query, const PairInputs& ref, const Params<T>& params);

double sigmoid(double logit);

// ---- Per-side forward/backward used by the trainer ----

template <typename T>
struct SideTrace {
  Vec<T> image_in;
  Vec<T> text_in;
  Side side = Side::kQuery;
  Vec<T> fused;
  std::vector<Vec<T>> block_input;  // input of each aligner block
  std::vector<Vec<T>> normalized;   // (u - mean) / std before scale/shift
  std::vector<T> inv_std;
  std::vector<Vec<T>> pre_relu;     // LayerNorm output
  Vec<T> out;
};

template <typename T>
SideTrace<T> forward_side(std::span<const float> image_emb, std::span<const float> text_emb, const Params<T>& params,
                          Side side);

// Accumulates d(out) back into `grads`.
template <typename T>
void backward_side(const SideTrace<T>& trace, const Vec<T>& d_out, const Params<T>& params, Params<T>& grads);

// ---- Reranking ----

// Reorders the candidates of `ranking` by score_pair (descending, ties by
// ascending id). The candidate set is never changed. Throws ValidationError
// naming any record that lacks a text embedding.
retriever::Ranking rerank(const geostore::QueryRecord& query, const retriever::Ranking& ranking,
                          const Params<float>& params, const geostore::Store& store);

std::vector<retriever::Ranking> rerank_all(const std::vector<retriever::Ranking>& rankings,
                                           const Params<float>& params, const geostore::Store& store);

}  // namespace cvrank::reranker
