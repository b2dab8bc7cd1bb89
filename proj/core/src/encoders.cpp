#include "comkd/encoders.hpp"

#include <cmath>

#include "comkd/errors.hpp"
#include "comkd/ops.hpp"

namespace comkd {

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_features()) {
    throw DimensionError("linear layer expects [B x " + std::to_string(in_features()) +
                         "] input, got " + shape_string(x.shape()));
  }
  Tensor y = matmul(x, transpose(weight));
  return has_bias ? add_row(y, bias) : y;
}

ParameterSet Linear::parameters() const {
  if (has_bias) return {weight, bias};
  return {weight};
}

Linear Linear::kaiming(std::size_t in, std::size_t out, Rng& rng, bool bias) {
  const double w_bound = std::sqrt(6.0 / static_cast<double>(in));
  const double b_bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<float> w(out * in);
  for (auto& v : w) v = static_cast<float>(rng.uniform(-w_bound, w_bound));
  Linear layer;
  layer.weight = Tensor::from({out, in}, std::move(w), true);
  layer.has_bias = bias;
  if (bias) {
    std::vector<float> b(out);
    for (auto& v : b) v = static_cast<float>(rng.uniform(-b_bound, b_bound));
    layer.bias = Tensor::from({out}, std::move(b), true);
  }
  return layer;
}

Linear Linear::identity(std::size_t n) {
  std::vector<float> w(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0f;
  Linear layer;
  layer.weight = Tensor::from({n, n}, std::move(w), true);
  layer.bias = Tensor::zeros({n}, true);
  return layer;
}

EncoderParams EncoderParams::init(std::size_t input_width, std::size_t hidden_width,
                                  std::size_t feature_dim, Rng& rng) {
  EncoderParams p;
  p.hidden = Linear::kaiming(input_width, hidden_width, rng);
  p.output = Linear::kaiming(hidden_width, feature_dim, rng);
  return p;
}

Tensor init_prompt(std::size_t prompt_len, std::size_t prompt_width) {
  return Tensor::zeros({prompt_len * prompt_width}, true);
}

Tensor init_text_table(std::size_t classes, std::size_t feature_dim, Rng& rng) {
  std::vector<float> values(classes * feature_dim);
  for (auto& v : values) v = static_cast<float>(rng.normal());
  return Tensor::from({classes, feature_dim}, std::move(values), true);
}

Tensor encode_image(const EncoderParams& params, const Tensor& prompt, const Tensor& batch) {
  if (prompt.numel() >= params.input_width()) {
    throw DimensionError("encode_image: prompt of " + std::to_string(prompt.numel()) +
                         " values leaves no room in an encoder of input width " +
                         std::to_string(params.input_width()));
  }
  const std::size_t k = params.input_width() - prompt.numel();
  if (batch.rank() != 2 || batch.dim(1) != k) {
    throw DimensionError("encode_image: expected [B x " + std::to_string(k) + "] batch, got " +
                         shape_string(batch.shape()));
  }
  const Tensor x = concat_cols(batch, repeat_rows(prompt, batch.dim(0)));
  return l2_normalize_rows(params.output.forward(relu(params.hidden.forward(x))));
}

Tensor teacher_text_features(const Tensor& table) { return l2_normalize_rows(table); }

Tensor project(const Linear& projector, const Tensor& features) {
  if (features.rank() != 2 || features.dim(1) != projector.in_features()) {
    throw DimensionError("project: expected [B x " + std::to_string(projector.in_features()) +
                         "] features, got " + shape_string(features.shape()));
  }
  return projector.forward(features);
}

}  // namespace comkd
