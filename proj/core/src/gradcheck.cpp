#include "comkd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "comkd/eduattention.hpp"
#include "comkd/encoders.hpp"
#include "comkd/errors.hpp"
#include "comkd/ifalign.hpp"
#include "comkd/losses.hpp"
#include "comkd/models.hpp"
#include "comkd/ops.hpp"
#include "comkd/trainer.hpp"

namespace comkd {

namespace {

// Entries uniform in [-1, 1] with |x| >= margin, so kinked ops stay on one
// side of their kink under a step of size h.
Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = true, double margin = 0.0) {
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) {
    double x = rng.uniform(-1.0, 1.0);
    while (std::fabs(x) < margin) x = rng.uniform(-1.0, 1.0);
    v = static_cast<float>(x);
  }
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

std::size_t small_dim(Rng& rng) { return 1 + static_cast<std::size_t>(rng.below(5)); }

double projected(const Tensor& y, const std::vector<float>& weights) {
  double acc = 0.0;
  const auto d = y.data();
  for (std::size_t i = 0; i < d.size(); ++i) acc += static_cast<double>(weights[i]) * d[i];
  return acc;
}

bool min_abs_at_least(const Tensor& t, float margin) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [&](float v) { return std::fabs(v) >= margin; });
}

using Case = std::function<double(Rng&)>;

double check(Rng& rng, const ParameterSet& inputs, const std::function<Tensor()>& fn) {
  return max_gradient_error(fn, inputs, rng);
}

double unary_case(Rng& rng, Tensor (*op)(const Tensor&), double margin = 0.0) {
  const Tensor a = random_tensor(rng, {small_dim(rng), small_dim(rng)}, true, margin);
  return check(rng, {a}, [&] { return op(a); });
}

double binary_case(Rng& rng, Tensor (*op)(const Tensor&, const Tensor&)) {
  const Shape s{small_dim(rng), small_dim(rng)};
  const Tensor a = random_tensor(rng, s), b = random_tensor(rng, s);
  return check(rng, {a, b}, [&] { return op(a, b); });
}

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.input_dim = 4;
  cfg.teacher_hidden = 5;
  cfg.teacher_dim = 4;
  cfg.student_hidden = 5;
  cfg.student_dim = 3;
  cfg.attn_dim = 4;
  cfg.prompt_len = 1;
  cfg.prompt_width = 2;
  cfg.seed = seed;
  return cfg;
}

double pipeline_case(Rng& rng) {
  for (;;) {
    TrainConfig cfg = tiny_config(rng.next_u64());
    cfg.tau = static_cast<float>(rng.uniform(0.5, 2.0));
    TeacherModel teacher = TeacherModel::init(cfg, 3);
    teacher.freeze();
    StudentModel student = StudentModel::init(cfg, teacher.text_features());
    student.attention.alpha.mutable_data()[0] = static_cast<float>(rng.uniform(0.3, 0.8));
    for (auto& v : student.prompt.mutable_data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const Tensor batch = random_tensor(rng, {4, cfg.input_dim}, false);

    const Tensor pre = student.encoder.hidden.forward(
        concat_cols(batch, repeat_rows(student.prompt, batch.dim(0))));
    const StudentModel::Forward f = student.forward(batch);
    const AlignStats s = compute_stats(f.projected);
    const AlignStats t = compute_stats(teacher.image_features(batch));
    if (!min_abs_at_least(pre, 0.02f) || !min_abs_at_least(sub(s.mean, t.mean), 0.02f) ||
        !min_abs_at_least(sub(s.var, t.var), 0.02f)) {
      continue;
    }
    return check(rng, student.parameters(),
                 [&] { return distillation_loss(cfg, teacher, student, batch).l_final; });
  }
}

std::vector<std::pair<std::string, Case>> cases() {
  std::vector<std::pair<std::string, Case>> out;
  out.emplace_back("matmul", [](Rng& rng) {
    const std::size_t m = small_dim(rng), k = small_dim(rng), n = small_dim(rng);
    const Tensor a = random_tensor(rng, {m, k}), b = random_tensor(rng, {k, n});
    return check(rng, {a, b}, [&] { return matmul(a, b); });
  });
  out.emplace_back("transpose", [](Rng& rng) { return unary_case(rng, transpose); });
  out.emplace_back("add", [](Rng& rng) { return binary_case(rng, add); });
  out.emplace_back("sub", [](Rng& rng) { return binary_case(rng, sub); });
  out.emplace_back("mul", [](Rng& rng) { return binary_case(rng, mul); });
  out.emplace_back("add_row", [](Rng& rng) {
    const std::size_t m = small_dim(rng), n = small_dim(rng);
    const Tensor a = random_tensor(rng, {m, n}), v = random_tensor(rng, {n});
    return check(rng, {a, v}, [&] { return add_row(a, v); });
  });
  out.emplace_back("scale", [](Rng& rng) {
    const Tensor a = random_tensor(rng, {small_dim(rng), small_dim(rng)});
    const float f = static_cast<float>(rng.uniform(-2.0, 2.0));
    return check(rng, {a}, [&] { return scale(a, f); });
  });
  out.emplace_back("scale_by", [](Rng& rng) {
    const Tensor a = random_tensor(rng, {small_dim(rng), small_dim(rng)});
    const Tensor s = random_tensor(rng, {});
    return check(rng, {a, s}, [&] { return scale_by(a, s); });
  });
  out.emplace_back("concat_cols", [](Rng& rng) {
    const std::size_t m = small_dim(rng);
    const Tensor a = random_tensor(rng, {m, small_dim(rng)});
    const Tensor b = random_tensor(rng, {m, small_dim(rng)});
    return check(rng, {a, b}, [&] { return concat_cols(a, b); });
  });
  out.emplace_back("repeat_rows", [](Rng& rng) {
    const Tensor v = random_tensor(rng, {small_dim(rng)});
    const std::size_t count = small_dim(rng);
    return check(rng, {v}, [&] { return repeat_rows(v, count); });
  });
  out.emplace_back("relu", [](Rng& rng) { return unary_case(rng, relu, 0.05); });
  out.emplace_back("abs", [](Rng& rng) { return unary_case(rng, abs, 0.05); });
  out.emplace_back("row_softmax", [](Rng& rng) {
    const Tensor x = random_tensor(rng, {small_dim(rng), small_dim(rng)});
    const float tau = static_cast<float>(rng.uniform(0.5, 2.0));
    return check(rng, {x}, [&] { return row_softmax(x, tau); });
  });
  out.emplace_back("log_softmax_rows", [](Rng& rng) {
    const Tensor x = random_tensor(rng, {small_dim(rng), small_dim(rng)});
    const float tau = static_cast<float>(rng.uniform(0.5, 2.0));
    return check(rng, {x}, [&] { return log_softmax_rows(x, tau); });
  });
  out.emplace_back("l2_normalize_rows", [](Rng& rng) {
    const Tensor x = random_tensor(rng, {small_dim(rng), 1 + small_dim(rng)}, true, 0.1);
    return check(rng, {x}, [&] { return l2_normalize_rows(x); });
  });
  out.emplace_back("reduce_mean_rows", [](Rng& rng) { return unary_case(rng, reduce_mean_rows); });
  out.emplace_back("reduce_var_rows", [](Rng& rng) { return unary_case(rng, reduce_var_rows); });
  out.emplace_back("sum", [](Rng& rng) { return unary_case(rng, sum); });
  out.emplace_back("mean", [](Rng& rng) { return unary_case(rng, mean); });
  out.emplace_back("linear", [](Rng& rng) {
    const std::size_t in = small_dim(rng);
    const Linear layer = Linear::kaiming(in, small_dim(rng), rng);
    const Tensor x = random_tensor(rng, {small_dim(rng), in});
    ParameterSet inputs = layer.parameters();
    inputs.push_back(x);
    return check(rng, inputs, [&] { return layer.forward(x); });
  });
  out.emplace_back("align_loss", [](Rng& rng) {
    for (;;) {
      const Shape s{1 + small_dim(rng), small_dim(rng)};
      const Tensor student = random_tensor(rng, s);
      const Tensor teacher = random_tensor(rng, s, false);
      const AlignStats a = compute_stats(student), b = compute_stats(teacher);
      if (!min_abs_at_least(sub(a.mean, b.mean), 0.02f) ||
          !min_abs_at_least(sub(a.var, b.var), 0.02f)) {
        continue;
      }
      return check(rng, {student}, [&] { return align_loss(student, teacher).total; });
    }
  });
  out.emplace_back("cross_attention+fuse", [](Rng& rng) {
    const std::size_t d = small_dim(rng);
    AttentionParams params = AttentionParams::init(d, d, static_cast<float>(d), rng);
    params.alpha.mutable_data()[0] = static_cast<float>(rng.uniform(-1.0, 1.0));
    const Tensor u = random_tensor(rng, {small_dim(rng), d});
    const Tensor w = random_tensor(rng, {small_dim(rng), d}, false);
    ParameterSet inputs = params.parameters();
    inputs.push_back(u);
    return check(rng, inputs,
                 [&] { return fuse(params, u, cross_attention(params, u, w).features).fused; });
  });
  out.emplace_back("clip_logits", [](Rng& rng) {
    const std::size_t d = 1 + small_dim(rng);
    const Tensor x = random_tensor(rng, {small_dim(rng), d}, true, 0.1);
    const Tensor w = random_tensor(rng, {small_dim(rng), d}, true, 0.1);
    const float tau = static_cast<float>(rng.uniform(0.5, 2.0));
    return check(rng, {x, w}, [&] {
      return clip_logits(l2_normalize_rows(x), l2_normalize_rows(w), tau).values;
    });
  });
  out.emplace_back("cross_entropy", [](Rng& rng) {
    const std::size_t b = small_dim(rng), n = 1 + small_dim(rng);
    const Tensor logits = random_tensor(rng, {b, n});
    std::vector<int> labels(b);
    for (auto& y : labels) y = static_cast<int>(rng.below(n));
    const float tau = static_cast<float>(rng.uniform(0.5, 2.0));
    return check(rng, {logits}, [&] { return cross_entropy({logits, tau}, labels); });
  });
  auto logit_pair_case = [](KdLoss kind, double margin) {
    return [kind, margin](Rng& rng) {
      for (;;) {
        const Shape s{small_dim(rng), 1 + small_dim(rng)};
        const Tensor t = random_tensor(rng, s, false);
        const Tensor q = random_tensor(rng, s);
        if (!min_abs_at_least(sub(t, q), static_cast<float>(margin))) continue;
        const float tau = static_cast<float>(rng.uniform(0.5, 2.0));
        return check(rng, {q},
                     [&] { return refinement_loss(kind, {t, tau}, {q, tau}, tau); });
      }
    };
  };
  out.emplace_back("kd_kl_loss", logit_pair_case(KdLoss::kl, 0.0));
  out.emplace_back("l1_logit_loss", logit_pair_case(KdLoss::l1, 0.02));
  out.emplace_back("mse_logit_loss", logit_pair_case(KdLoss::mse, 0.0));
  out.emplace_back("student_pipeline", pipeline_case);
  return out;
}

}  // namespace

double gradient_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

double max_gradient_error(const std::function<Tensor()>& fn, const ParameterSet& inputs, Rng& rng,
                          float step) {
  if (!(step > 0.0f)) throw ParameterError("max_gradient_error: step must be positive");
  for (const auto& t : inputs) {
    if (!t.requires_grad() || !t.is_leaf()) {
      throw InvariantError("max_gradient_error: inputs must be leaves that require grad");
    }
  }
  const Tensor y = fn();
  std::vector<float> weights(y.numel(), 1.0f);
  if (y.numel() != 1) {
    for (auto& w : weights) w = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  zero_grads(inputs);
  sum(mul(y, Tensor::from(y.shape(), weights))).backward();

  double worst = 0.0;
  for (auto t : inputs) {
    const std::vector<float> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const float saved = values[i];
      values[i] = saved + step;
      const double hi = values[i];
      const double plus = projected(fn(), weights);
      values[i] = saved - step;
      const double lo = values[i];
      const double minus = projected(fn(), weights);
      values[i] = saved;
      const double numeric = (plus - minus) / (hi - lo);
      worst = std::max(worst, gradient_error(analytic[i], numeric));
    }
  }
  zero_grads(inputs);
  return worst;
}

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, std::size_t instances) {
  std::vector<GradCheckResult> results;
  for (auto& [name, run] : cases()) {
    GradCheckResult r{name, instances, 0.0};
    for (std::size_t i = 0; i < instances; ++i) {
      Rng rng(derive_seed(seed, name + "/" + std::to_string(i)));
      r.max_error = std::max(r.max_error, run(rng));
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace comkd
