#pragma once

#include <optional>
#include <string_view>

#include "comkd/tensor.hpp"

namespace comkd {

// Per-dimension batch statistics of a feature batch.
struct AlignStats {
  Tensor mean;  // [d]
  Tensor var;   // [d], population variance
};

struct AlignLoss {
  Tensor mean_term;  // mean_d |mu_s - mu_t|
  Tensor var_term;   // mean_d |var_s - var_t|
  Tensor total;      // mean_term + var_term
};

// Which statistic drives the alignment term.
enum class AlignKind { mean, var, both };

std::string_view to_string(AlignKind kind);
std::optional<AlignKind> parse_align_kind(std::string_view text);

AlignStats compute_stats(const Tensor& features);

// Statistics-matching loss between projected student features and teacher
// features (both [B x d_t]). The teacher side is detached, so only the
// student receives gradient.
AlignLoss align_loss(const Tensor& student_proj, const Tensor& teacher);

// The term selected by `kind`: mean_term, var_term or total.
const Tensor& align_term(const AlignLoss& loss, AlignKind kind);

}  // namespace comkd
