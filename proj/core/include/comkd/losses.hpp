#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "comkd/tensor.hpp"

namespace comkd {

// Cosine-similarity logits between unit-norm image features and unit-norm
// class text features, with the temperature used by every downstream
// softmax.
struct LogitMatrix {
  Tensor values;  // [B x N]
  float temperature = 1.0f;

  // row_softmax(values, temperature)
  Tensor probabilities() const;
};

// Both inputs must have unit-norm rows (within 1e-3), else InvariantError.
LogitMatrix clip_logits(const Tensor& features, const Tensor& text, float temperature);

// Mean over the batch of -log p(label).
Tensor cross_entropy(const LogitMatrix& logits, std::span<const int> labels);

// tau^2 * mean_b KL(softmax(q_t / tau) || softmax(q_s / tau)); the teacher is
// detached.
Tensor kd_kl_loss(const LogitMatrix& teacher, const LogitMatrix& student, float temperature);
// Mean absolute / mean squared difference of raw logits.
Tensor l1_logit_loss(const LogitMatrix& teacher, const LogitMatrix& student);
Tensor mse_logit_loss(const LogitMatrix& teacher, const LogitMatrix& student);

enum class KdLoss { kl, l1, mse };

std::string_view to_string(KdLoss kind);
std::optional<KdLoss> parse_kd_loss(std::string_view text);

Tensor refinement_loss(KdLoss kind, const LogitMatrix& teacher, const LogitMatrix& student,
                       float temperature);

struct LossBreakdown {
  Tensor l_stu;
  Tensor l_align;
  Tensor l_final;  // l_stu + lambda_align * l_align
  float lambda_align = 1.0f;
};

LossBreakdown final_loss(const Tensor& l_stu, const Tensor& l_align, float lambda_align);

}  // namespace comkd
