#include <cmath>

#include "comkd/checkpoint.hpp"
#include "comkd/errors.hpp"
#include "comkd/ops.hpp"
#include "comkd/trainer.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace comkd;

namespace {

Dataset two_blobs() {
  // Means at +-3 along the first axis, unit noise: separation 6 sigma.
  Rng rng(99);
  const std::size_t per_class = 50, k = 8;
  std::vector<float> x;
  std::vector<int> y;
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double mean = j == 0 ? (c == 0 ? -3.0 : 3.0) : 0.0;
        x.push_back(static_cast<float>(mean + rng.normal()));
      }
      y.push_back(c);
    }
  }
  Dataset d;
  d.inputs = Tensor::from({2 * per_class, k}, std::move(x));
  d.labels = std::move(y);
  d.class_count = 2;
  return d;
}

struct Pipeline {
  TrainConfig cfg = fixtures::tiny_config(3);
  Dataset train = gen_synthetic(fixtures::tiny_spec(3));
  TeacherModel teacher = pretrain_teacher(cfg, train).model;
};

}  // namespace

TEST_CASE("teacher separates two well-separated classes") {
  TrainConfig cfg = fixtures::tiny_config();
  cfg.epochs_teacher = 200;
  const TeacherRun run = pretrain_teacher(cfg, two_blobs());
  CHECK(run.log.epochs.back().train_accuracy >= 99.0);
  CHECK(run.model.frozen());
}

TEST_CASE("zero teacher epochs returns the initialization") {
  TrainConfig cfg = fixtures::tiny_config();
  cfg.epochs_teacher = 0;
  const Dataset d = gen_synthetic(fixtures::tiny_spec());
  const TeacherRun run = pretrain_teacher(cfg, d);
  CHECK(parameter_hash(run.model.parameters()) == parameter_hash(TeacherModel::init(cfg, 4).parameters()));
  CHECK(run.log.epochs.size() == 1);
}

TEST_CASE("teacher training is deterministic") {
  const TrainConfig cfg = fixtures::tiny_config(5);
  const Dataset d = gen_synthetic(fixtures::tiny_spec(5));
  const TeacherRun a = pretrain_teacher(cfg, d), b = pretrain_teacher(cfg, d);
  CHECK(encode_checkpoint(to_checkpoint(a.model, cfg)) == encode_checkpoint(to_checkpoint(b.model, cfg)));
  CHECK(a.log.epochs == b.log.epochs);
}

TEST_CASE("teacher run log") {
  const TrainConfig cfg = fixtures::tiny_config();
  std::vector<std::size_t> seen;
  const TeacherRun run = pretrain_teacher(cfg, gen_synthetic(fixtures::tiny_spec()),
                                          [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  REQUIRE(run.log.epochs.size() == cfg.epochs_teacher + 1);
  for (std::size_t e = 0; e < run.log.epochs.size(); ++e) {
    CHECK(run.log.epochs[e].epoch == e);
    CHECK(seen[e] == e);
    CHECK(std::isfinite(run.log.epochs[e].l_final));
  }
  CHECK(run.log.seed == cfg.seed);
  CHECK(run.log.wall_seconds >= 0.0);
}

TEST_CASE("pretrain_teacher errors") {
  const TrainConfig cfg = fixtures::tiny_config();
  const Dataset d = gen_synthetic(fixtures::tiny_spec());
  CHECK_THROWS_AS(pretrain_teacher(cfg, d.subset(std::vector<std::size_t>{})), ParameterError);
  CHECK_THROWS_AS(pretrain_teacher(cfg, d.without_labels()), ParameterError);
  const std::vector<int> three{0, 1, 2};
  CHECK_THROWS_AS(pretrain_teacher(cfg, d.filter_classes(three)), ParameterError);
  TrainConfig wide = cfg;
  wide.input_dim = 9;
  CHECK_THROWS_AS(pretrain_teacher(wide, d), ConfigError);
}

TEST_CASE("distillation loss with both modules off is plain KL") {
  Pipeline p;
  TrainConfig cfg = p.cfg;
  cfg.lambda_align = 0.0f;
  cfg.eduattn = false;
  const StudentModel s = StudentModel::init(cfg, p.teacher.text_features());
  const Tensor x = p.train.inputs;
  const LossBreakdown lb = distillation_loss(cfg, p.teacher, s, x);
  const LogitMatrix qt = p.teacher.logits(x);
  const LogitMatrix qs = clip_logits(l2_normalize_rows(project(s.projector, encode_image(s.encoder, s.prompt, x))),
                                     p.teacher.text_features(), cfg.tau);
  CHECK(lb.l_final.item() == kd_kl_loss(qt, qs, cfg.tau).item());
}

TEST_CASE("kl-only reproduces the lambda-zero trajectory") {
  Pipeline p;
  TrainConfig kl_only = p.cfg;
  apply_ablation_preset(kl_only, "kl-only");
  TrainConfig zero_weight = p.cfg;
  zero_weight.eduattn = false;
  zero_weight.lambda_align = 0.0f;
  const StudentRun a = distill_student(kl_only, p.teacher, p.train.without_labels());
  const StudentRun b = distill_student(zero_weight, p.teacher, p.train.without_labels());
  REQUIRE(a.log.epochs.size() == b.log.epochs.size());
  for (std::size_t e = 0; e < a.log.epochs.size(); ++e) {
    CHECK(a.log.epochs[e].l_stu == b.log.epochs[e].l_stu);
    CHECK(a.log.epochs[e].l_final == b.log.epochs[e].l_final);
    CHECK(a.log.epochs[e].l_align == 0.0f);
  }
  CHECK(parameter_hash(a.model.parameters()) == parameter_hash(b.model.parameters()));
}

TEST_CASE("distillation descends and leaves the teacher untouched") {
  Pipeline p;
  TrainConfig cfg = p.cfg;
  cfg.epochs_student = 30;
  const auto before = parameter_hash(p.teacher.parameters());
  const StudentRun run = distill_student(cfg, p.teacher, p.train.without_labels());
  CHECK(run.log.epochs.back().l_final < run.log.epochs.front().l_final);
  CHECK(parameter_hash(p.teacher.parameters()) == before);
  for (const auto& t : p.teacher.parameters()) CHECK_FALSE(t.has_grad());
}

TEST_CASE("one distillation step sends gradient only to the student") {
  Pipeline p;
  StudentModel s = StudentModel::init(p.cfg, p.teacher.text_features());
  const Tensor x = p.train.subset(std::vector<std::size_t>{0, 5, 9, 20}).inputs;
  distillation_loss(p.cfg, p.teacher, s, x).l_final.backward();
  for (const auto& t : p.teacher.parameters()) CHECK_FALSE(t.has_grad());
  bool any = false;
  for (const auto& t : s.parameters())
    for (float g : t.grad()) any = any || g != 0.0f;
  CHECK(any);
  sgd_step(s.parameters(), p.cfg.lr_student);
}

TEST_CASE("distillation is deterministic") {
  Pipeline p;
  const StudentRun a = distill_student(p.cfg, p.teacher, p.train.without_labels());
  const StudentRun b = distill_student(p.cfg, p.teacher, p.train.without_labels());
  CHECK(a.log.epochs == b.log.epochs);
  CHECK(encode_checkpoint(to_checkpoint(a.model, p.cfg)) == encode_checkpoint(to_checkpoint(b.model, p.cfg)));
}

TEST_CASE("distill_student errors") {
  Pipeline p;
  const Dataset u = p.train.without_labels();
  TeacherModel live = TeacherModel::init(p.cfg, 4);
  CHECK_THROWS_AS(distill_student(p.cfg, live, u), InvariantError);
  TrainConfig other = p.cfg;
  other.teacher_dim = other.attn_dim = 6;
  CHECK_THROWS_AS(distill_student(other, p.teacher, u), ConfigError);
  other = p.cfg;
  other.input_dim = 7;
  CHECK_THROWS_AS(distill_student(other, p.teacher, u), ConfigError);
  CHECK_THROWS_AS(distill_student(p.cfg, p.teacher, u.subset(std::vector<std::size_t>{})), ParameterError);
}

TEST_CASE("ablation grids") {
  CHECK(ablation_grid("table4").size() == 4);
  CHECK(ablation_grid("table5").size() == 3);
  CHECK(ablation_grid("table6").size() == 3);
  const auto custom = ablation_grid("kl-only,kd=mse,align=var");
  REQUIRE(custom.size() == 3);
  CHECK_FALSE(custom[0].ifalign);
  CHECK_FALSE(custom[0].eduattn);
  CHECK(custom[1].kd_loss == KdLoss::mse);
  CHECK(custom[2].align == AlignKind::var);
  CHECK_THROWS_AS(ablation_grid("full,no-such-cell"), ConfigError);
  CHECK_THROWS_AS(parse_ablation_cell("kd=cosine"), ConfigError);
  CHECK_THROWS_AS(ablation_grid(""), ConfigError);
}

TEST_CASE("run_ablation is independent of scheduling") {
  Pipeline p;
  const Dataset test = gen_synthetic(fixtures::tiny_spec(3, 1));
  const auto grid = ablation_grid("table4");
  const auto serial = run_ablation(p.cfg, p.teacher, p.train.without_labels(), test, SplitSpec::halves(4), grid, 1);
  const auto parallel = run_ablation(p.cfg, p.teacher, p.train.without_labels(), test, SplitSpec::halves(4), grid, 4);
  REQUIRE(serial.size() == 4);
  REQUIRE(parallel.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(serial[i].cell.name == grid[i].name);
    CHECK(parallel[i].cell.name == grid[i].name);
    CHECK(serial[i].metrics == parallel[i].metrics);
    CHECK(serial[i].log.epochs == parallel[i].log.epochs);
  }
}
