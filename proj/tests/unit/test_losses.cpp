#include <cmath>

#include "comkd/config.hpp"
#include "comkd/errors.hpp"
#include "comkd/losses.hpp"
#include "comkd/ops.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace comkd;

TEST_CASE("clip_logits") {
  const Tensor u = Tensor::matrix({{1, 0}});
  const LogitMatrix q = clip_logits(u, Tensor::matrix({{1, 0}, {0, 1}}), 1.0f);
  CHECK(q.values.at(0) == 1.0f);
  CHECK(q.values.at(1) == 0.0f);
  const Tensor p = q.probabilities();
  CHECK(p.at(0) == doctest::Approx(0.73106).epsilon(1e-4));
  CHECK(p.at(1) == doctest::Approx(0.26894).epsilon(1e-4));

  const LogitMatrix single = clip_logits(Tensor::matrix({{0.6f, 0.8f}}), Tensor::matrix({{0, 1}}), 1.0f);
  CHECK(single.probabilities().item() == 1.0f);

  CHECK_THROWS_AS(clip_logits(Tensor::matrix({{2, 0}}), Tensor::matrix({{1, 0}}), 1.0f), InvariantError);
  CHECK_THROWS_AS(clip_logits(u, Tensor::matrix({{0.5f, 0}}), 1.0f), InvariantError);
  CHECK_THROWS_AS(clip_logits(u, Tensor::matrix({{1, 0}}), 0.0f), ParameterError);
  CHECK_THROWS_AS(clip_logits(u, Tensor::matrix({{1, 0, 0}}), 1.0f), DimensionError);
  CHECK(TrainConfig{}.tau == 1.0f);
}

TEST_CASE("clip_logits properties") {
  oracle::Random rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor u = l2_normalize_rows(rng.tensor({4, 6}, false, 0.05));
    const Tensor w = l2_normalize_rows(rng.tensor({5, 6}, false, 0.05));
    const LogitMatrix q = clip_logits(u, w, 1.0f);
    for (float v : q.values.data()) CHECK(std::fabs(v) <= 1.0f + 1e-5f);
    std::size_t argmax1 = 0;
    for (float tau : {0.5f, 1.0f, 2.0f}) {
      const Tensor p = row_softmax(q.values, tau);
      for (std::size_t i = 0; i < 4; ++i) {
        double total = 0.0;
        std::size_t best = 0;
        for (std::size_t j = 0; j < 5; ++j) {
          total += p.at(i, j);
          if (p.at(i, j) > p.at(i, best)) best = j;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
        if (i == 0) {
          if (tau == 0.5f) argmax1 = best;
          CHECK(best == argmax1);
        }
      }
    }
  }
}

TEST_CASE("cross_entropy") {
  const std::vector<int> zero{0};
  CHECK(cross_entropy({Tensor::matrix({{1, 0}}), 1.0f}, zero).item() == doctest::Approx(0.31326).epsilon(1e-4));
  const std::vector<int> labels{0, 3};
  CHECK(cross_entropy({Tensor::zeros({2, 5}), 1.0f}, labels).item() == doctest::Approx(std::log(5.0)).epsilon(1e-5));
  float last = 1e9f;
  for (float s : {1.0f, 10.0f, 100.0f}) {
    const float l = cross_entropy({Tensor::matrix({{s, 0, 0}}), 1.0f}, zero).item();
    CHECK(l >= 0.0f);
    CHECK(l < last);
    last = l;
  }
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(cross_entropy({Tensor::matrix({{1, 0}}), 1.0f}, bad), ParameterError);
  const std::vector<int> negative{-1};
  CHECK_THROWS_AS(cross_entropy({Tensor::matrix({{1, 0}}), 1.0f}, negative), ParameterError);
  CHECK_THROWS_AS(cross_entropy({Tensor::matrix({{1, 0}}), 1.0f}, labels), DimensionError);
}

TEST_CASE("kd_kl_loss") {
  const LogitMatrix qt{Tensor::matrix({{1, 0}}), 1.0f}, qs{Tensor::matrix({{0, 1}}), 1.0f};
  CHECK(kd_kl_loss(qt, qt, 1.0f).item() == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(kd_kl_loss(qt, qs, 1.0f).item() == doctest::Approx(0.46212).epsilon(1e-4));
  const double expected = oracle::kl_loss({{1, 0}}, {{0, 1}}, 2.0);
  CHECK(kd_kl_loss(qt, qs, 2.0f).item() == doctest::Approx(expected).epsilon(1e-5));
  CHECK_THROWS_AS(kd_kl_loss(qt, {Tensor::zeros({1, 3}), 1.0f}, 1.0f), DimensionError);
  CHECK_THROWS_AS(kd_kl_loss(qt, qs, -1.0f), ParameterError);
}

TEST_CASE("kd_kl_loss detaches the teacher") {
  const Tensor t = Tensor::matrix({{0.3f, -0.2f, 0.9f}}, true);
  const Tensor s = Tensor::matrix({{0.1f, 0.4f, -0.5f}}, true);
  kd_kl_loss({t, 1.0f}, {s, 1.0f}, 1.0f).backward();
  for (float g : t.grad()) CHECK(g == 0.0f);
}

TEST_CASE("l1 and mse logit losses") {
  const LogitMatrix qt{Tensor::matrix({{1, 0}}), 1.0f}, qs{Tensor::matrix({{0, 1}}), 1.0f};
  CHECK(l1_logit_loss(qt, qt).item() == 0.0f);
  CHECK(mse_logit_loss(qt, qt).item() == 0.0f);
  CHECK(l1_logit_loss(qt, qs).item() == doctest::Approx(1.0));
  CHECK(mse_logit_loss(qt, qs).item() == doctest::Approx(1.0));
  for (float c : {-0.5f, 0.25f, 2.0f}) {
    const LogitMatrix shifted{add(qt.values, Tensor::full({1, 2}, c)), 1.0f};
    CHECK(l1_logit_loss(qt, shifted).item() == doctest::Approx(std::fabs(c)));
    CHECK(mse_logit_loss(qt, shifted).item() == doctest::Approx(c * c));
  }
  CHECK_THROWS_AS(l1_logit_loss(qt, {Tensor::zeros({2, 2}), 1.0f}), DimensionError);
  CHECK_THROWS_AS(mse_logit_loss(qt, {Tensor::zeros({2, 2}), 1.0f}), DimensionError);
}

TEST_CASE("KD losses agree with scalar oracles on random 4x8 logits") {
  oracle::Random rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const Tensor a = rng.tensor({4, 8}), b = rng.tensor({4, 8});
    const float tau = static_cast<float>(rng.uniform(0.5, 2.0));
    const auto ma = oracle::to_matrix(a), mb = oracle::to_matrix(b);
    const double kl = kd_kl_loss({a, tau}, {b, tau}, tau).item();
    CHECK(kl >= 0.0);
    CHECK(kl == doctest::Approx(oracle::kl_loss(ma, mb, tau)).epsilon(1e-5));
    CHECK(l1_logit_loss({a, tau}, {b, tau}).item() == doctest::Approx(oracle::l1_loss(ma, mb)).epsilon(1e-5));
    CHECK(mse_logit_loss({a, tau}, {b, tau}).item() == doctest::Approx(oracle::mse_loss(ma, mb)).epsilon(1e-5));
  }
}

TEST_CASE("refinement_loss dispatches on the kind") {
  const LogitMatrix qt{Tensor::matrix({{1, 0}}), 1.0f}, qs{Tensor::matrix({{0, 1}}), 1.0f};
  CHECK(refinement_loss(KdLoss::kl, qt, qs, 1.0f).item() == kd_kl_loss(qt, qs, 1.0f).item());
  CHECK(refinement_loss(KdLoss::l1, qt, qs, 1.0f).item() == l1_logit_loss(qt, qs).item());
  CHECK(refinement_loss(KdLoss::mse, qt, qs, 1.0f).item() == mse_logit_loss(qt, qs).item());
  CHECK(parse_kd_loss("mse") == KdLoss::mse);
  CHECK_FALSE(parse_kd_loss("cosine").has_value());
  CHECK(to_string(KdLoss::l1) == "l1");
}

TEST_CASE("final_loss") {
  CHECK(final_loss(Tensor::scalar(0.5f), Tensor::scalar(0.25f), 1.0f).l_final.item() == 0.75f);
  const LossBreakdown zero = final_loss(Tensor::scalar(0.3f), Tensor::scalar(0.9f), 0.0f);
  CHECK(zero.l_final.item() == zero.l_stu.item());
  CHECK(final_loss(Tensor::scalar(0.4f), Tensor::scalar(0.2f), 0.5f).l_final.item() == doctest::Approx(0.5));
  CHECK_THROWS_AS(final_loss(Tensor::vector({1, 2}), Tensor::scalar(0.2f), 1.0f), ParameterError);
}
