#include "comkd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "comkd/errors.hpp"

namespace comkd {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor make_result(Shape shape, std::vector<float> values, const char* op,
                   std::vector<NodePtr> inputs, std::function<void(Node&)> adjoint) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const NodePtr& n) { return n->requires_grad; });
  if (needs_grad) {
    node->requires_grad = true;
    node->grad.assign(node->data.size(), 0.0f);
    node->inputs = std::move(inputs);
    node->adjoint = std::move(adjoint);
  }
  return Tensor(std::move(node));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_temperature(float temperature, const char* op) {
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    throw ParameterError(std::string(op) + ": temperature must be positive, got " +
                         std::to_string(temperature));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<float> out(m * n, 0.0f);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const float av = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  }
  return make_result({m, n}, std::move(out), "matmul", {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       const auto& g = self.grad;
                       if (na.requires_grad) {
                         // dA = dC * B^T
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             float acc = 0.0f;
                             for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * nb.data[p * n + j];
                             na.grad[i * k + p] += acc;
                           }
                       }
                       if (nb.requires_grad) {
                         // dB = A^T * dC
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const float av = na.data[i * k + p];
                             for (std::size_t j = 0; j < n; ++j) nb.grad[p * n + j] += av * g[i * n + j];
                           }
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<float> out(m * n);
  const auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return make_result({n, m}, std::move(out), "transpose", {a.node()}, [m, n](Node& self) {
    Node& na = *self.inputs[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) na.grad[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_result(a.shape(), std::move(out), "add", {a.node(), b.node()}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return make_result(a.shape(), std::move(out), "sub", {a.node(), b.node()}, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
    if (nb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return make_result(a.shape(), std::move(out), "mul", {a.node(), b.node()}, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * nb.data[i];
    if (nb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] += self.grad[i] * na.data[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& v) {
  require_matrix(a, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (v.rank() != 1 || v.dim(0) != n) {
    throw DimensionError("add_row: row vector " + shape_string(v.shape()) +
                         " does not match matrix " + shape_string(a.shape()));
  }
  std::vector<float> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.at(i * n + j) + v.at(j);
  return make_result({m, n}, std::move(out), "add_row", {a.node(), v.node()}, [m, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nv = *self.inputs[1];
    if (na.requires_grad)
      for (std::size_t i = 0; i < m * n; ++i) na.grad[i] += self.grad[i];
    if (nv.requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) nv.grad[j] += self.grad[i * n + j];
  });
}

Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  return make_result(a.shape(), std::move(out), "scale", {a.node()}, [factor](Node& self) {
    Node& na = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * factor;
  });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("scale_by: factor must have one element, got shape " +
                         shape_string(s.shape()));
  }
  const float factor = s.item();
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  return make_result(a.shape(), std::move(out), "scale_by", {a.node(), s.node()}, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& ns = *self.inputs[1];
    const float factor = ns.data[0];
    if (na.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * factor;
    if (ns.requires_grad) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * na.data[i];
      ns.grad[0] += acc;
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  const std::size_t m = a.dim(0), ka = a.dim(1), kb = b.dim(1);
  if (b.dim(0) != m) {
    throw DimensionError("concat_cols: row counts differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t k = ka + kb;
  std::vector<float> out(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < ka; ++j) out[i * k + j] = a.at(i * ka + j);
    for (std::size_t j = 0; j < kb; ++j) out[i * k + ka + j] = b.at(i * kb + j);
  }
  return make_result({m, k}, std::move(out), "concat_cols", {a.node(), b.node()},
                     [m, ka, kb, k](Node& self) {
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       for (std::size_t i = 0; i < m; ++i) {
                         if (na.requires_grad)
                           for (std::size_t j = 0; j < ka; ++j) na.grad[i * ka + j] += self.grad[i * k + j];
                         if (nb.requires_grad)
                           for (std::size_t j = 0; j < kb; ++j)
                             nb.grad[i * kb + j] += self.grad[i * k + ka + j];
                       }
                     });
}

Tensor repeat_rows(const Tensor& v, std::size_t count) {
  if (v.rank() != 1) {
    throw DimensionError("repeat_rows: expected a vector, got shape " + shape_string(v.shape()));
  }
  const std::size_t p = v.dim(0);
  std::vector<float> out(count * p);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < p; ++j) out[i * p + j] = v.at(j);
  return make_result({count, p}, std::move(out), "repeat_rows", {v.node()}, [count, p](Node& self) {
    Node& nv = *self.inputs[0];
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < p; ++j) nv.grad[j] += self.grad[i * p + j];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) > 0.0f ? a.at(i) : 0.0f;
  return make_result(a.shape(), std::move(out), "relu", {a.node()}, [](Node& self) {
    Node& na = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (na.data[i] > 0.0f) na.grad[i] += self.grad[i];
  });
}

Tensor abs(const Tensor& a) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.at(i));
  return make_result(a.shape(), std::move(out), "abs", {a.node()}, [](Node& self) {
    Node& na = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const float x = na.data[i];
      // Subgradient 0 at the kink.
      if (x > 0.0f) na.grad[i] += self.grad[i];
      else if (x < 0.0f) na.grad[i] -= self.grad[i];
    }
  });
}

Tensor row_softmax(const Tensor& x, float temperature) {
  require_temperature(temperature, "row_softmax");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<float> out(x.numel());
  for (std::size_t i = 0; i < m && n > 0; ++i) {
    const float* row = x.data().data() + i * n;
    float* o = out.data() + i * n;
    float mx = row[0] / temperature;
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j] / temperature);
    float total = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(row[j] / temperature - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return make_result(x.shape(), std::move(out), "row_softmax", {x.node()},
                     [m, n, temperature](Node& self) {
                       Node& nx = *self.inputs[0];
                       const auto& y = self.data;
                       const auto& g = self.grad;
                       for (std::size_t i = 0; i < m; ++i) {
                         float dot = 0.0f;
                         for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           nx.grad[i * n + j] += y[i * n + j] * (g[i * n + j] - dot) / temperature;
                       }
                     });
}

Tensor log_softmax_rows(const Tensor& x, float temperature) {
  require_temperature(temperature, "log_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<float> out(x.numel());
  for (std::size_t i = 0; i < m && n > 0; ++i) {
    const float* row = x.data().data() + i * n;
    float* o = out.data() + i * n;
    float mx = row[0] / temperature;
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j] / temperature);
    float total = 0.0f;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] / temperature - mx);
    const float log_total = std::log(total);
    for (std::size_t j = 0; j < n; ++j) o[j] = row[j] / temperature - mx - log_total;
  }
  return make_result(x.shape(), std::move(out), "log_softmax_rows", {x.node()},
                     [m, n, temperature](Node& self) {
                       Node& nx = *self.inputs[0];
                       const auto& y = self.data;
                       const auto& g = self.grad;
                       for (std::size_t i = 0; i < m; ++i) {
                         float gsum = 0.0f;
                         for (std::size_t j = 0; j < n; ++j) gsum += g[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           nx.grad[i * n + j] +=
                               (g[i * n + j] - std::exp(y[i * n + j]) * gsum) / temperature;
                       }
                     });
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_matrix(x, "l2_normalize_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<float> out(x.numel());
  std::vector<float> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += double(x.at(i * n + j)) * x.at(i * n + j);
    const double norm = std::sqrt(sq);
    if (!(norm >= 1e-12)) {
      throw DegenerateFeatureError("l2_normalize_rows: row " + std::to_string(i) +
                                   " has norm below 1e-12");
    }
    norms[i] = static_cast<float>(norm);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i * n + j) / norms[i];
  }
  return make_result({m, n}, std::move(out), "l2_normalize_rows", {x.node()},
                     [m, n, norms = std::move(norms)](Node& self) {
                       Node& nx = *self.inputs[0];
                       const auto& y = self.data;
                       const auto& g = self.grad;
                       // dx = (g - y <y, g>) / |x|
                       for (std::size_t i = 0; i < m; ++i) {
                         float dot = 0.0f;
                         for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * g[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           nx.grad[i * n + j] += (g[i * n + j] - y[i * n + j] * dot) / norms[i];
                       }
                     });
}

Tensor reduce_mean_rows(const Tensor& x) {
  require_matrix(x, "reduce_mean_rows");
  const std::size_t b = x.dim(0), d = x.dim(1);
  if (b == 0) throw ParameterError("reduce_mean_rows: empty batch");
  std::vector<float> out(d, 0.0f);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.at(i * d + j);
  for (auto& v : out) v /= static_cast<float>(b);
  return make_result({d}, std::move(out), "reduce_mean_rows", {x.node()}, [b, d](Node& self) {
    Node& nx = *self.inputs[0];
    const float inv = 1.0f / static_cast<float>(b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) nx.grad[i * d + j] += self.grad[j] * inv;
  });
}

Tensor reduce_var_rows(const Tensor& x) {
  require_matrix(x, "reduce_var_rows");
  const std::size_t b = x.dim(0), d = x.dim(1);
  if (b == 0) throw ParameterError("reduce_var_rows: empty batch");
  const float inv = 1.0f / static_cast<float>(b);
  std::vector<float> mu(d, 0.0f);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x.at(i * d + j);
  for (auto& v : mu) v *= inv;
  std::vector<float> out(d, 0.0f);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const float c = x.at(i * d + j) - mu[j];
      out[j] += c * c;
    }
  for (auto& v : out) v *= inv;
  return make_result({d}, std::move(out), "reduce_var_rows", {x.node()},
                     [b, d, inv, mu = std::move(mu)](Node& self) {
                       Node& nx = *self.inputs[0];
                       // d var_j / d x_ij = 2 (x_ij - mu_j) / B; the mean term cancels.
                       for (std::size_t i = 0; i < b; ++i)
                         for (std::size_t j = 0; j < d; ++j)
                           nx.grad[i * d + j] += self.grad[j] * 2.0f * (nx.data[i * d + j] - mu[j]) * inv;
                     });
}

Tensor sum(const Tensor& a) {
  float total = 0.0f;
  for (float v : a.data()) total += v;
  return make_result({}, {total}, "sum", {a.node()}, [](Node& self) {
    Node& na = *self.inputs[0];
    for (auto& g : na.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ParameterError("mean of an empty tensor");
  float total = 0.0f;
  for (float v : a.data()) total += v;
  const float inv = 1.0f / static_cast<float>(a.numel());
  return make_result({}, {total * inv}, "mean", {a.node()}, [inv](Node& self) {
    Node& na = *self.inputs[0];
    for (auto& g : na.grad) g += self.grad[0] * inv;
  });
}

}  // namespace comkd
