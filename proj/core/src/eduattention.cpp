#include "comkd/eduattention.hpp"

#include <cmath>

#include "comkd/errors.hpp"
#include "comkd/ops.hpp"

namespace comkd {

ParameterSet AttentionParams::parameters() const {
  ParameterSet out;
  for (const auto* layer : {&query, &key, &value}) {
    const auto p = layer->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  out.push_back(alpha);
  return out;
}

AttentionParams AttentionParams::init(std::size_t feature_dim, std::size_t attn_dim, float scale,
                                      Rng& rng) {
  if (!(scale > 0.0f)) throw ParameterError("attention scale must be positive");
  AttentionParams p;
  p.query = Linear::kaiming(feature_dim, attn_dim, rng);
  p.key = Linear::kaiming(feature_dim, attn_dim, rng);
  p.value = Linear::kaiming(feature_dim, attn_dim, rng);
  p.alpha = Tensor::scalar(0.0f, true);
  p.scale = scale;
  return p;
}

AttentionOutput cross_attention(const AttentionParams& params, const Tensor& u_s,
                                const Tensor& w_t) {
  const std::size_t d = params.query.in_features();
  if (u_s.rank() != 2 || u_s.dim(1) != d) {
    throw DimensionError("cross_attention: image features " + shape_string(u_s.shape()) +
                         " do not have width " + std::to_string(d));
  }
  if (w_t.rank() != 2 || w_t.dim(1) != params.key.in_features()) {
    throw DimensionError("cross_attention: text features " + shape_string(w_t.shape()) +
                         " do not have width " + std::to_string(params.key.in_features()));
  }
  if (w_t.dim(0) == 0) throw ParameterError("cross_attention: no text rows");

  const Tensor text = w_t.detach();
  const Tensor q = params.query.forward(u_s);
  const Tensor k = params.key.forward(text);
  const Tensor v = params.value.forward(text);
  const Tensor scores = scale(matmul(q, transpose(k)), 1.0f / std::sqrt(params.scale));
  Tensor weights = row_softmax(scores, 1.0f);
  Tensor features = matmul(weights, v);
  return {std::move(features), std::move(weights)};
}

FusedFeatures fuse(const AttentionParams& params, const Tensor& u_s, const Tensor& f_att) {
  if (u_s.shape() != f_att.shape()) {
    throw DimensionError("fuse: image features " + shape_string(u_s.shape()) +
                         " vs attention output " + shape_string(f_att.shape()));
  }
  return {add(u_s, scale_by(f_att, params.alpha))};
}

}  // namespace comkd
