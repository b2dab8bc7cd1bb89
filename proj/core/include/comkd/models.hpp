#pragma once

#include <cstdint>

#include "comkd/config.hpp"
#include "comkd/eduattention.hpp"
#include "comkd/encoders.hpp"
#include "comkd/losses.hpp"

namespace comkd {

// Anything that scores a batch of raw samples against N classes.
class ImageClassifier {
 public:
  virtual ~ImageClassifier() = default;
  // Gradient-free forward pass: [B x k] samples -> [B x N] logits.
  virtual LogitMatrix predict(const Tensor& inputs) const = 0;
  virtual std::size_t class_count() const = 0;
  virtual std::size_t input_dim() const = 0;
};

// Large model: wide image encoder, learnable prompt and per-class text table.
class TeacherModel : public ImageClassifier {
 public:
  EncoderParams encoder;
  Tensor prompt;
  Tensor text_table;  // [N x d_t]
  float temperature = 1.0f;

  static TeacherModel init(const TrainConfig& cfg, std::size_t classes);

  // u_t: unit-norm image features [B x d_t].
  Tensor image_features(const Tensor& inputs) const;
  // W: unit-norm text features [N x d_t].
  Tensor text_features() const;
  LogitMatrix logits(const Tensor& inputs) const;

  ParameterSet parameters() const;
  // Drops gradient buffers on every parameter; afterwards forward passes
  // record nothing.
  void freeze();
  bool frozen() const;

  LogitMatrix predict(const Tensor& inputs) const override;
  std::size_t class_count() const override { return text_table.dim(0); }
  std::size_t input_dim() const override { return encoder.input_width() - prompt.numel(); }
  std::size_t feature_dim() const { return encoder.feature_dim(); }
};

// Small model: narrow image encoder and prompt, projector to the teacher
// width, cross-attention fusion, and the teacher's frozen text features.
class StudentModel : public ImageClassifier {
 public:
  struct Forward {
    Tensor features;   // u_s [B x d_s], unit-norm
    Tensor projected;  // P(u_s) [B x d_t]
    Tensor fused;      // f_e before normalization
    Tensor normalized; // f_e / |f_e|
    LogitMatrix logits;
  };

  EncoderParams encoder;
  Tensor prompt;
  Linear projector;
  AttentionParams attention;
  Tensor text_features;  // [N x d_t], copied from the teacher, never trained
  bool use_attention = true;
  float temperature = 1.0f;

  static StudentModel init(const TrainConfig& cfg, const Tensor& teacher_text_features);

  Forward forward(const Tensor& inputs) const;

  ParameterSet parameters() const;

  LogitMatrix predict(const Tensor& inputs) const override;
  std::size_t class_count() const override { return text_features.dim(0); }
  std::size_t input_dim() const override { return encoder.input_width() - prompt.numel(); }
};

// FNV-1a over shapes and raw float bytes of the given tensors.
std::uint64_t parameter_hash(const ParameterSet& params);

}  // namespace comkd
