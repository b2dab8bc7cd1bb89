#include "comkd/losses.hpp"

#include <cmath>

#include "comkd/errors.hpp"
#include "comkd/ops.hpp"

namespace comkd {

namespace {

constexpr float kNormTolerance = 1e-3f;

void require_unit_rows(const Tensor& t, const char* what) {
  const std::size_t n = t.dim(1);
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += double(t.at(i * n + j)) * t.at(i * n + j);
    if (std::fabs(std::sqrt(sq) - 1.0) > kNormTolerance) {
      throw InvariantError(std::string("clip_logits: ") + what + " row " + std::to_string(i) +
                           " is not unit-norm (norm " + std::to_string(std::sqrt(sq)) + ")");
    }
  }
}

void require_same_logits(const LogitMatrix& a, const LogitMatrix& b, const char* op) {
  if (a.values.shape() != b.values.shape()) {
    throw DimensionError(std::string(op) + ": teacher logits " + shape_string(a.values.shape()) +
                         " vs student logits " + shape_string(b.values.shape()));
  }
  if (a.values.rank() != 2 || a.values.dim(0) == 0) {
    throw ParameterError(std::string(op) + ": expected a non-empty [B x N] logit matrix");
  }
}

}  // namespace

Tensor LogitMatrix::probabilities() const { return row_softmax(values, temperature); }

LogitMatrix clip_logits(const Tensor& features, const Tensor& text, float temperature) {
  if (!(temperature > 0.0f)) throw ParameterError("clip_logits: temperature must be positive");
  if (features.rank() != 2 || text.rank() != 2 || features.dim(1) != text.dim(1)) {
    throw DimensionError("clip_logits: features " + shape_string(features.shape()) +
                         " vs text " + shape_string(text.shape()));
  }
  require_unit_rows(features, "feature");
  require_unit_rows(text, "text");
  return {matmul(features, transpose(text)), temperature};
}

Tensor cross_entropy(const LogitMatrix& logits, std::span<const int> labels) {
  const std::size_t b = logits.values.dim(0), n = logits.values.dim(1);
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(b) + " rows");
  }
  if (b == 0) throw ParameterError("cross_entropy: empty batch");
  std::vector<float> one_hot(b * n, 0.0f);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n) {
      throw ParameterError("cross_entropy: label " + std::to_string(labels[i]) +
                           " outside [0, " + std::to_string(n) + ")");
    }
    one_hot[i * n + static_cast<std::size_t>(labels[i])] = 1.0f;
  }
  const Tensor picked =
      mul(log_softmax_rows(logits.values, logits.temperature), Tensor::from({b, n}, one_hot));
  return scale(sum(picked), -1.0f / static_cast<float>(b));
}

Tensor kd_kl_loss(const LogitMatrix& teacher, const LogitMatrix& student, float temperature) {
  require_same_logits(teacher, student, "kd_kl_loss");
  if (!(temperature > 0.0f)) throw ParameterError("kd_kl_loss: temperature must be positive");
  const std::size_t b = teacher.values.dim(0);
  const Tensor q_t = teacher.values.detach();
  const Tensor log_p_t = log_softmax_rows(q_t, temperature);
  const Tensor p_t = row_softmax(q_t, temperature);
  const Tensor log_p_s = log_softmax_rows(student.values, temperature);
  const Tensor kl_sum = sum(mul(p_t, sub(log_p_t, log_p_s)));
  return scale(kl_sum, temperature * temperature / static_cast<float>(b));
}

Tensor l1_logit_loss(const LogitMatrix& teacher, const LogitMatrix& student) {
  require_same_logits(teacher, student, "l1_logit_loss");
  return mean(abs(sub(student.values, teacher.values.detach())));
}

Tensor mse_logit_loss(const LogitMatrix& teacher, const LogitMatrix& student) {
  require_same_logits(teacher, student, "mse_logit_loss");
  const Tensor diff = sub(student.values, teacher.values.detach());
  return mean(mul(diff, diff));
}

std::string_view to_string(KdLoss kind) {
  switch (kind) {
    case KdLoss::kl: return "kl";
    case KdLoss::l1: return "l1";
    case KdLoss::mse: return "mse";
  }
  return "kl";
}

std::optional<KdLoss> parse_kd_loss(std::string_view text) {
  if (text == "kl") return KdLoss::kl;
  if (text == "l1") return KdLoss::l1;
  if (text == "mse") return KdLoss::mse;
  return std::nullopt;
}

Tensor refinement_loss(KdLoss kind, const LogitMatrix& teacher, const LogitMatrix& student,
                       float temperature) {
  switch (kind) {
    case KdLoss::kl: return kd_kl_loss(teacher, student, temperature);
    case KdLoss::l1: return l1_logit_loss(teacher, student);
    case KdLoss::mse: return mse_logit_loss(teacher, student);
  }
  return kd_kl_loss(teacher, student, temperature);
}

LossBreakdown final_loss(const Tensor& l_stu, const Tensor& l_align, float lambda_align) {
  if (l_stu.numel() != 1 || l_align.numel() != 1) {
    throw ParameterError("final_loss: loss terms must be scalars");
  }
  return {l_stu, l_align, add(l_stu, scale(l_align, lambda_align)), lambda_align};
}

}  // namespace comkd
