#pragma once

#include "comkd/tensor.hpp"

// Differentiable tensor operations. Matrices are rank-2 [rows x cols];
// "row vectors" are rank-1 tensors broadcast across rows.
namespace comkd {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a[M x N] + v[N] on every row.
Tensor add_row(const Tensor& a, const Tensor& v);
Tensor scale(const Tensor& a, float factor);
// a * s for a single-element tensor s; s receives gradient.
Tensor scale_by(const Tensor& a, const Tensor& s);

// [M x K1] | [M x K2] -> [M x (K1 + K2)]
Tensor concat_cols(const Tensor& a, const Tensor& b);
// v[P] stacked M times -> [M x P].
Tensor repeat_rows(const Tensor& v, std::size_t count);

Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);

// exp(x/tau - max) / sum, per row.
Tensor row_softmax(const Tensor& x, float temperature = 1.0f);
Tensor log_softmax_rows(const Tensor& x, float temperature = 1.0f);
// Rows scaled to unit Euclidean norm. Rows with norm < 1e-12 raise
// DegenerateFeatureError.
Tensor l2_normalize_rows(const Tensor& x);

// Per-column statistics over the batch (row) axis: [B x d] -> [d].
Tensor reduce_mean_rows(const Tensor& x);
// Population variance (divides by B).
Tensor reduce_var_rows(const Tensor& x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace comkd
