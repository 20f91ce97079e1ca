#include "cvrank/reranker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cvrank/error.hpp"

namespace cvrank::reranker {

void RerankerConfig::validate() const {
  if (image_dim == 0 || text_dim == 0 || latent_dim == 0 || aligner_hidden == 0) {
    throw ValidationError("reranker dimensions must be positive");
  }
  if (aligner_layers < 1) throw ValidationError("aligner_layers must be at least 1");
  if (!(ln_epsilon > 0.0) || !std::isfinite(ln_epsilon)) throw ValidationError("ln_epsilon must be positive");
}

namespace {

template <typename T>
void push_linear(std::vector<TensorRef<T>>& out, const std::string& prefix, auto& lin) {
  out.push_back({prefix + ".weight", lin.weight.data(), lin.weight.rows(), lin.weight.cols(), 2});
  out.push_back({prefix + ".bias", lin.bias.data(), lin.bias.size(), 1, 1});
}

template <typename T, typename P>
std::vector<TensorRef<T>> list_tensors(P& p) {
  std::vector<TensorRef<T>> out;
  push_linear(out, "proj.img", p.query_img);
  push_linear(out, "proj.txt", p.query_txt);
  if (!p.config.shared_projections) {
    push_linear(out, "proj_ref.img", p.ref_img);
    push_linear(out, "proj_ref.txt", p.ref_txt);
  }
  for (std::size_t l = 0; l < p.aligner.size(); ++l) {
    const std::string prefix = "aligner." + std::to_string(l);
    auto& blk = p.aligner[l];
    push_linear(out, prefix + ".linear", blk.linear);
    out.push_back({prefix + ".ln.scale", blk.ln_scale.data(), blk.ln_scale.size(), 1, 1});
    out.push_back({prefix + ".ln.shift", blk.ln_shift.data(), blk.ln_shift.size(), 1, 1});
  }
  out.push_back({"score.weight", p.score_weight.data(), p.score_weight.rows(), p.score_weight.cols(), 2});
  out.push_back({"score.bias", p.score_bias.data(), 1, 1, 0});
  return out;
}

template <typename T>
Linear<T> zero_linear(Eigen::Index out, Eigen::Index in) {
  return {Mat<T>::Zero(out, in), Vec<T>::Zero(out)};
}

template <typename T>
Params<T> zero_params(const RerankerConfig& c) {
  Params<T> p;
  p.config = c;
  const Eigen::Index h = c.latent_dim;
  p.query_img = zero_linear<T>(h, c.image_dim);
  p.query_txt = zero_linear<T>(h, c.text_dim);
  if (!c.shared_projections) {
    p.ref_img = zero_linear<T>(h, c.image_dim);
    p.ref_txt = zero_linear<T>(h, c.text_dim);
  }
  Eigen::Index in = h;
  for (std::uint32_t l = 0; l < c.aligner_layers; ++l) {
    const Eigen::Index out = (l + 1 == c.aligner_layers) ? h : static_cast<Eigen::Index>(c.aligner_hidden);
    p.aligner.push_back({zero_linear<T>(out, in), Vec<T>::Zero(out), Vec<T>::Zero(out)});
    in = out;
  }
  p.score_weight = Mat<T>::Zero(h, h);
  p.score_bias = Vec<T>::Zero(1);
  return p;
}

template <typename T>
Vec<T> to_vec(std::span<const float> v) {
  return Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size())).template cast<T>();
}

template <typename T, typename U>
Linear<U> cast_linear(const Linear<T>& l) {
  return {l.weight.template cast<U>(), l.bias.template cast<U>()};
}

}  // namespace

template <typename T>
std::vector<TensorRef<T>> Params<T>::tensors() {
  return list_tensors<T>(*this);
}

template <typename T>
std::vector<TensorRef<const T>> Params<T>::tensors() const {
  return list_tensors<const T>(*this);
}

template <typename T>
Params<T> Params<T>::zeros(const RerankerConfig& config) {
  config.validate();
  return zero_params<T>(config);
}

template <typename T>
Params<T> Params<T>::zeros_like() const {
  return zero_params<T>(config);
}

template <typename T>
template <typename U>
Params<U> Params<T>::cast() const {
  Params<U> p;
  p.config = config;
  p.query_img = cast_linear<T, U>(query_img);
  p.query_txt = cast_linear<T, U>(query_txt);
  p.ref_img = cast_linear<T, U>(ref_img);
  p.ref_txt = cast_linear<T, U>(ref_txt);
  for (const auto& blk : aligner) {
    p.aligner.push_back({cast_linear<T, U>(blk.linear), blk.ln_scale.template cast<U>(), blk.ln_shift.template cast<U>()});
  }
  p.score_weight = score_weight.template cast<U>();
  p.score_bias = score_bias.template cast<U>();
  return p;
}

Params<float> init_params(const RerankerConfig& config) {
  config.validate();
  auto p = zero_params<float>(config);
  std::mt19937_64 rng(config.init_seed);
  for (auto& t : p.tensors()) {
    const bool is_ln_scale = t.name.ends_with(".ln.scale");
    if (is_ln_scale) {
      std::fill(t.data, t.data + t.size(), 1.0f);
    } else if (t.rank == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<float>(dist(rng));
    }
  }
  return p;
}

template <typename T>
Vec<T> project_fuse(std::span<const float> image_emb, std::span<const float> text_emb, const Params<T>& params,
                    Side side) {
  const auto& c = params.config;
  if (image_emb.size() != c.image_dim || text_emb.size() != c.text_dim) {
    throw ValidationError("project_fuse: expected image/text dims " + std::to_string(c.image_dim) + "/" +
                          std::to_string(c.text_dim) + ", got " + std::to_string(image_emb.size()) + "/" +
                          std::to_string(text_emb.size()));
  }
  const bool ref_side = side == Side::kReference && !c.shared_projections;
  const auto& pi = ref_side ? params.ref_img : params.query_img;
  const auto& pt = ref_side ? params.ref_txt : params.query_txt;
  Vec<T> img_part = pi.weight * to_vec<T>(image_emb) + pi.bias;
  Vec<T> txt_part = pt.weight * to_vec<T>(text_emb) + pt.bias;
  return img_part + txt_part;
}

template <typename T>
SideTrace<T> forward_side(std::span<const float> image_emb, std::span<const float> text_emb, const Params<T>& params,
                          Side side) {
  SideTrace<T> tr;
  tr.side = side;
  tr.image_in = to_vec<T>(image_emb);
  tr.text_in = to_vec<T>(text_emb);
  tr.fused = project_fuse(image_emb, text_emb, params, side);
  const T eps = static_cast<T>(params.config.ln_epsilon);
  Vec<T> z = tr.fused;
  for (const auto& blk : params.aligner) {
    tr.block_input.push_back(z);
    const Vec<T> u = blk.linear.weight * z + blk.linear.bias;
    const T n = static_cast<T>(u.size());
    const T mean = u.sum() / n;
    const Vec<T> centred = u.array() - mean;
    const T var = centred.squaredNorm() / n;
    const T inv_std = T(1) / std::sqrt(var + eps);
    Vec<T> xhat = centred * inv_std;
    Vec<T> ln = (xhat.array() * blk.ln_scale.array() + blk.ln_shift.array()).matrix();
    z = ln.cwiseMax(T(0));
    tr.normalized.push_back(std::move(xhat));
    tr.inv_std.push_back(inv_std);
    tr.pre_relu.push_back(std::move(ln));
  }
  tr.out = std::move(z);
  return tr;
}

template <typename T>
void backward_side(const SideTrace<T>& tr, const Vec<T>& d_out, const Params<T>& params, Params<T>& grads) {
  Vec<T> dz = d_out;
  for (std::size_t l = params.aligner.size(); l-- > 0;) {
    const auto& blk = params.aligner[l];
    auto& gblk = grads.aligner[l];
    const Vec<T> d_ln = (tr.pre_relu[l].array() > T(0)).select(dz, Vec<T>::Zero(dz.size()));
    const auto& xhat = tr.normalized[l];
    gblk.ln_scale.array() += d_ln.array() * xhat.array();
    gblk.ln_shift += d_ln;
    const Vec<T> dxhat = (d_ln.array() * blk.ln_scale.array()).matrix();
    const T n = static_cast<T>(dxhat.size());
    const T mean_d = dxhat.sum() / n;
    const T mean_dx = dxhat.dot(xhat) / n;
    const Vec<T> du = ((dxhat.array() - mean_d - xhat.array() * mean_dx) * tr.inv_std[l]).matrix();
    gblk.linear.weight.noalias() += du * tr.block_input[l].transpose();
    gblk.linear.bias += du;
    dz = blk.linear.weight.transpose() * du;
  }
  const bool ref_side = tr.side == Side::kReference && !params.config.shared_projections;
  auto& gi = ref_side ? grads.ref_img : grads.query_img;
  auto& gt = ref_side ? grads.ref_txt : grads.query_txt;
  gi.weight.noalias() += dz * tr.image_in.transpose();
  gi.bias += dz;
  gt.weight.noalias() += dz * tr.text_in.transpose();
  gt.bias += dz;
}

template <typename T>
Vec<T> align(const Vec<T>& fused, const Params<T>& params) {
  if (fused.size() != static_cast<Eigen::Index>(params.config.latent_dim)) {
    throw ValidationError("align: expected a vector of size " + std::to_string(params.config.latent_dim));
  }
  const T eps = static_cast<T>(params.config.ln_epsilon);
  Vec<T> z = fused;
  for (const auto& blk : params.aligner) {
    const Vec<T> u = blk.linear.weight * z + blk.linear.bias;
    const T n = static_cast<T>(u.size());
    const Vec<T> centred = u.array() - u.sum() / n;
    const T inv_std = T(1) / std::sqrt(centred.squaredNorm() / n + eps);
    z = (centred.array() * inv_std * blk.ln_scale.array() + blk.ln_shift.array()).matrix().cwiseMax(T(0));
  }
  return z;
}

double sigmoid(double logit) {
  double s;
  if (logit >= 0) {
    s = 1.0 / (1.0 + std::exp(-logit));
  } else {
    const double e = std::exp(logit);
    s = e / (1.0 + e);
  }
  return std::clamp(s, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

template <typename T>
PairScoreTrace score_pair_trace(const PairInputs& query, const PairInputs& ref, const Params<T>& params) {
  const auto q = forward_side(query.image_emb, query.text_emb, params, Side::kQuery);
  const auto r = forward_side(ref.image_emb, ref.text_emb, params, Side::kReference);
  PairScoreTrace out;
  out.fused_query = q.fused.template cast<double>();
  out.fused_ref = r.fused.template cast<double>();
  out.aligned_query = q.out.template cast<double>();
  out.aligned_ref = r.out.template cast<double>();
  const T logit = (params.score_weight * q.out).dot(r.out) + params.score_bias[0];
  out.logit = static_cast<double>(logit);
  out.score = sigmoid(out.logit);
  return out;
}

template <typename T>
double score_pair(const PairInputs& query, const PairInputs& ref, const Params<T>& params) {
  return score_pair_trace(query, ref, params).score;
}

retriever::Ranking rerank(const geostore::QueryRecord& query, const retriever::Ranking& ranking,
                          const Params<float>& params, const geostore::Store& store) {
  if (!query.text_emb) throw ValidationError("rerank: query '" + query.id + "' has no text embedding");
  const auto q = forward_side<float>(query.image_emb, *query.text_emb, params, Side::kQuery);
  const Vec<float> wq = params.score_weight * q.out;

  retriever::Ranking out = ranking;
  out.query_id = query.id;
  out.reranked = true;
  for (auto& e : out.entries) {
    const auto& ref = store.reference(e.reference_id);
    if (!ref.text_emb) throw ValidationError("rerank: reference '" + ref.id + "' has no text embedding");
    const auto r = forward_side<float>(ref.image_emb, *ref.text_emb, params, Side::kReference);
    e.score = sigmoid(static_cast<double>(wq.dot(r.out) + params.score_bias[0]));
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    return retriever::ranks_before(a.score, a.reference_id, b.score, b.reference_id);
  });
  return out;
}

std::vector<retriever::Ranking> rerank_all(const std::vector<retriever::Ranking>& rankings,
                                           const Params<float>& params, const geostore::Store& store) {
  std::vector<retriever::Ranking> out;
  out.reserve(rankings.size());
  for (const auto& r : rankings) out.push_back(rerank(store.query(r.query_id), r, params, store));
  return out;
}

#define CVRANK_INSTANTIATE(T)                                                                                   \
  template struct Params<T>;                                                                                    \
  template Vec<T> project_fuse<T>(std::span<const float>, std::span<const float>, const Params<T>&, Side);      \
  template Vec<T> align<T>(const Vec<T>&, const Params<T>&);                                                    \
  template SideTrace<T> forward_side<T>(std::span<const float>, std::span<const float>, const Params<T>&, Side); \
  template void backward_side<T>(const SideTrace<T>&, const Vec<T>&, const Params<T>&, Params<T>&);            \
  template PairScoreTrace score_pair_trace<T>(const PairInputs&, const PairInputs&, const Params<T>&);          \
  template double score_pair<T>(const PairInputs&, const PairInputs&, const Params<T>&);

CVRANK_INSTANTIATE(float)
CVRANK_INSTANTIATE(double)
#undef CVRANK_INSTANTIATE

template Params<double> Params<float>::cast<double>() const;
template Params<float> Params<double>::cast<float>() const;
template Params<float> Params<float>::cast<float>() const;
template Params<double> Params<double>::cast<double>() const;

}  // namespace cvrank::reranker
