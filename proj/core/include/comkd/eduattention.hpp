#pragma once

#include "comkd/encoders.hpp"
#include "comkd/random.hpp"
#include "comkd/tensor.hpp"

namespace comkd {

// Cross-attention from student image features (queries) to teacher text
// features (keys and values), blended back into the image features through
// a scalar gate that starts at zero.
struct AttentionParams {
  Linear query;  // d_t -> d_a
  Linear key;    // d_t -> d_a
  Linear value;  // d_t -> d_a
  Tensor alpha;  // scalar gate
  float scale = 1.0f;  // C; scores are divided by sqrt(C)

  ParameterSet parameters() const;

  static AttentionParams init(std::size_t feature_dim, std::size_t attn_dim, float scale, Rng& rng);
};

struct AttentionOutput {
  Tensor features;  // f_att [B x d_a]
  Tensor weights;   // [B x N], rows sum to 1
};

struct FusedFeatures {
  Tensor fused;  // f_e = u_s + alpha * f_att
};

// softmax(Q K^T / sqrt(C)) V with Q = FC_Q(u_s), K = FC_K(w_t), V = FC_V(w_t);
// the softmax runs over the N text rows. w_t is treated as a constant.
AttentionOutput cross_attention(const AttentionParams& params, const Tensor& u_s,
                                const Tensor& w_t);

FusedFeatures fuse(const AttentionParams& params, const Tensor& u_s, const Tensor& f_att);

}  // namespace comkd
