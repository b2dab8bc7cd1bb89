#include <cmath>

#include "comkd/encoders.hpp"
#include "comkd/errors.hpp"
#include "comkd/ops.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace comkd;

TEST_CASE("encode_image output rows are unit norm") {
  Rng rng(5);
  const EncoderParams p = EncoderParams::init(10, 12, 6, rng);
  const Tensor prompt = init_prompt(2, 1);
  oracle::Random r(1);
  const Tensor u = encode_image(p, prompt, r.tensor({7, 8}));
  CHECK(u.shape() == Shape{7, 6});
  for (std::size_t i = 0; i < 7; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < 6; ++j) sq += u.at(i, j) * u.at(i, j);
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("encode_image edge cases") {
  Rng rng(5);
  EncoderParams p = EncoderParams::init(10, 12, 6, rng);
  const Tensor prompt = init_prompt(2, 1);
  SUBCASE("empty batch") {
    const Tensor u = encode_image(p, prompt, Tensor::zeros({0, 8}));
    CHECK(u.shape() == Shape{0, 6});
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(encode_image(p, prompt, Tensor::zeros({3, 9})), DimensionError);
  }
  SUBCASE("zero final layer without bias is degenerate") {
    p.output.weight = Tensor::zeros({6, 12}, true);
    p.output.has_bias = false;
    CHECK_THROWS_AS(encode_image(p, prompt, Tensor::full({2, 8}, 1.0f)), DegenerateFeatureError);
  }
  SUBCASE("prompt wider than the encoder input") {
    CHECK_THROWS_AS(encode_image(p, init_prompt(10, 1), Tensor::zeros({1, 0})), DimensionError);
  }
}

TEST_CASE("encode_image is permutation-equivariant over the batch") {
  Rng rng(9);
  const EncoderParams p = EncoderParams::init(6, 8, 4, rng);
  const Tensor prompt = Tensor::vector({0.3f, -0.2f});
  const Tensor x = Tensor::matrix({{1, 2, 3, 4}, {-1, 0, 2, 1}, {0.5f, 0.5f, -2, 3}});
  const Tensor xp = Tensor::matrix({{0.5f, 0.5f, -2, 3}, {1, 2, 3, 4}, {-1, 0, 2, 1}});
  const Tensor u = encode_image(p, prompt, x), up = encode_image(p, prompt, xp);
  const std::size_t perm[] = {2, 0, 1};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(up.at(i, j) == u.at(perm[i], j));
}

TEST_CASE("encoder initialization") {
  Rng rng(2);
  const Linear l = Linear::kaiming(16, 5, rng);
  const double bound = std::sqrt(6.0 / 16.0);
  for (float w : l.weight.data()) CHECK(std::fabs(w) <= bound);
  for (float b : l.bias.data()) CHECK(std::fabs(b) <= 0.25);
  CHECK(l.weight.requires_grad());
  const Tensor prompt = init_prompt(4, 3);
  CHECK(prompt.numel() == 12);
  for (float v : prompt.data()) CHECK(v == 0.0f);
  CHECK(prompt.requires_grad());
  const Tensor table = init_text_table(5, 7, rng);
  CHECK(table.shape() == Shape{5, 7});
}

TEST_CASE("teacher_text_features") {
  const Tensor unit = Tensor::matrix({{1, 0, 0, 0}, {0, 0.6f, 0.8f, 0}});
  const Tensor w = teacher_text_features(unit);
  for (std::size_t i = 0; i < unit.numel(); ++i) CHECK(w.at(i) == doctest::Approx(unit.at(i)));
  const Tensor w2 = teacher_text_features(Tensor::matrix({{3, 4, 0, 0}}));
  CHECK(w2.at(0) == doctest::Approx(0.6));
  CHECK(w2.at(1) == doctest::Approx(0.8));
  CHECK(teacher_text_features(Tensor::matrix({{2, 0}})).shape() == Shape{1, 2});
  const Tensor p = row_softmax(matmul(Tensor::matrix({{0.6f, 0.8f}}), transpose(teacher_text_features(Tensor::matrix({{2, 0}})))));
  CHECK(p.item() == 1.0f);
  CHECK_THROWS_AS(teacher_text_features(Tensor::matrix({{1, 0}, {0, 0}})), DegenerateFeatureError);
}

TEST_CASE("project") {
  SUBCASE("identity projector") {
    const Linear id = Linear::identity(3);
    const Tensor u = Tensor::matrix({{0.1f, -0.5f, 2}});
    const Tensor v = project(id, u);
    for (std::size_t i = 0; i < 3; ++i) CHECK(v.at(i) == u.at(i));
  }
  SUBCASE("zero weights give the bias") {
    Linear l;
    l.weight = Tensor::zeros({3, 2});
    l.bias = Tensor::vector({1, 2, 3});
    const Tensor v = project(l, Tensor::matrix({{5, 6}, {-1, 4}}));
    CHECK(v.at(1, 2) == 3.0f);
    CHECK(v.at(0, 0) == 1.0f);
  }
  SUBCASE("2 to 3 with fixed weights") {
    Linear l;
    l.weight = Tensor::matrix({{1, 0}, {0, 1}, {1, 1}});
    l.has_bias = false;
    const Tensor v = project(l, Tensor::matrix({{1, 2}}));
    CHECK(v.at(0) == 1.0f);
    CHECK(v.at(1) == 2.0f);
    CHECK(v.at(2) == 3.0f);
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(project(Linear::identity(3), Tensor::zeros({1, 2})), DimensionError);
  }
}
