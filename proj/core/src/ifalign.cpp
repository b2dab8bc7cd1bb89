#include "comkd/ifalign.hpp"

#include "comkd/errors.hpp"
#include "comkd/ops.hpp"

namespace comkd {

std::string_view to_string(AlignKind kind) {
  switch (kind) {
    case AlignKind::mean: return "mean";
    case AlignKind::var: return "var";
    case AlignKind::both: return "both";
  }
  return "both";
}

std::optional<AlignKind> parse_align_kind(std::string_view text) {
  if (text == "mean") return AlignKind::mean;
  if (text == "var") return AlignKind::var;
  if (text == "both") return AlignKind::both;
  return std::nullopt;
}

AlignStats compute_stats(const Tensor& features) {
  if (features.rank() != 2) {
    throw DimensionError("compute_stats: expected [B x d] features, got " +
                         shape_string(features.shape()));
  }
  if (features.dim(0) == 0) throw ParameterError("compute_stats: empty batch");
  return {reduce_mean_rows(features), reduce_var_rows(features)};
}

AlignLoss align_loss(const Tensor& student_proj, const Tensor& teacher) {
  if (student_proj.shape() != teacher.shape()) {
    throw DimensionError("align_loss: student " + shape_string(student_proj.shape()) +
                         " vs teacher " + shape_string(teacher.shape()));
  }
  const AlignStats s = compute_stats(student_proj);
  const AlignStats t = compute_stats(teacher.detach());
  AlignLoss loss;
  loss.mean_term = mean(abs(sub(s.mean, t.mean)));
  loss.var_term = mean(abs(sub(s.var, t.var)));
  loss.total = add(loss.mean_term, loss.var_term);
  return loss;
}

const Tensor& align_term(const AlignLoss& loss, AlignKind kind) {
  switch (kind) {
    case AlignKind::mean: return loss.mean_term;
    case AlignKind::var: return loss.var_term;
    case AlignKind::both: return loss.total;
  }
  return loss.total;
}

}  // namespace comkd
