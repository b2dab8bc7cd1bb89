#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "comkd/random.hpp"
#include "comkd/tensor.hpp"

namespace comkd {

inline constexpr float kGradCheckStep = 1e-3f;
inline constexpr double kGradCheckTolerance = 1e-3;

// |analytic - numeric| / max(1, |analytic|, |numeric|)
double gradient_error(double analytic, double numeric);

// Compares reverse-mode gradients of `fn` with respect to every tensor in
// `inputs` against central differences. Non-scalar outputs are reduced by
// a random projection drawn from `rng`. Returns the worst gradient_error.
double max_gradient_error(const std::function<Tensor()>& fn, const ParameterSet& inputs, Rng& rng,
                          float step = kGradCheckStep);

struct GradCheckResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;

  bool passed() const { return max_error < kGradCheckTolerance; }
};

// Every differentiable op plus the composite losses and the full student
// pipeline, each on `instances` random small problems.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, std::size_t instances = 10);

}  // namespace comkd
