#pragma once

#include <cstddef>

#include "comkd/random.hpp"
#include "comkd/tensor.hpp"

namespace comkd {

// Affine map y = x W^T + b with W stored [out x in].
struct Linear {
  Tensor weight;
  Tensor bias;  // [out]; unused when has_bias is false
  bool has_bias = true;

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor forward(const Tensor& x) const;
  ParameterSet parameters() const;

  // Kaiming-uniform weights (fan-in, ReLU gain), bias U(-1/sqrt(in), 1/sqrt(in)).
  static Linear kaiming(std::size_t in, std::size_t out, Rng& rng, bool bias = true);
  static Linear identity(std::size_t n);
};

// Two affine layers with a rectifier between them. The first layer sees the
// raw sample concatenated with the prompt.
struct EncoderParams {
  Linear hidden;
  Linear output;

  std::size_t input_width() const { return hidden.in_features(); }
  std::size_t feature_dim() const { return output.out_features(); }
  ParameterSet parameters() const { return concat(hidden.parameters(), output.parameters()); }

  static EncoderParams init(std::size_t input_width, std::size_t hidden_width,
                            std::size_t feature_dim, Rng& rng);

 private:
  static ParameterSet concat(ParameterSet a, const ParameterSet& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
};

// Learnable vector of prompt_len * prompt_width values appended to every
// encoder input row. Zero-initialized.
Tensor init_prompt(std::size_t prompt_len, std::size_t prompt_width);

// Unit-Gaussian rows; row i is the pre-normalization text feature of class i.
Tensor init_text_table(std::size_t classes, std::size_t feature_dim, Rng& rng);

// MLP(concat(batch, prompt)) with unit-norm output rows. batch is [B x k]
// where k + prompt size equals the first layer's input width.
Tensor encode_image(const EncoderParams& params, const Tensor& prompt, const Tensor& batch);

// Row-normalized copy of the text table, the classification matrix W.
Tensor teacher_text_features(const Tensor& table);

// Row-wise affine map d_s -> d_t; no normalization.
Tensor project(const Linear& projector, const Tensor& features);

}  // namespace comkd
