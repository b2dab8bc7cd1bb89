#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "comkd/config.hpp"
#include "comkd/dataset.hpp"
#include "comkd/evaluator.hpp"
#include "comkd/models.hpp"

namespace comkd {

struct EpochRecord {
  std::size_t epoch = 0;
  float l_stu = 0.0f;
  float l_align = 0.0f;
  float l_final = 0.0f;
  // Percent. Against labels when the data has them, otherwise against the
  // teacher's argmax.
  double train_accuracy = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

// Record 0 is measured before the first update; record e after epoch e.
// Each record averages the per-minibatch losses over one pass in dataset
// order with the parameters frozen for that pass.
struct RunLog {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TeacherRun {
  TeacherModel model;  // frozen
  RunLog log;
};

struct StudentRun {
  StudentModel model;
  RunLog log;
};

// Cross-entropy pretraining on labeled data; every class must have at
// least one sample. The returned teacher is frozen.
TeacherRun pretrain_teacher(const TrainConfig& cfg, const Dataset& labeled,
                            const EpochCallback& on_epoch = {});

// The per-batch distillation objective for the current parameters. Also
// used by the trainer itself, so tests can inspect exactly what is
// optimized.
LossBreakdown distillation_loss(const TrainConfig& cfg, const TeacherModel& teacher,
                                const StudentModel& student, const Tensor& batch);

// Trains a student against a frozen teacher on (possibly unlabeled) data.
StudentRun distill_student(const TrainConfig& cfg, const TeacherModel& teacher,
                           const Dataset& unlabeled, const EpochCallback& on_epoch = {});

// One cell of an ablation table: a name plus the switches it sets.
struct AblationCell {
  std::string name;
  bool ifalign = true;
  bool eduattn = true;
  KdLoss kd_loss = KdLoss::kl;
  AlignKind align = AlignKind::both;

  void apply(TrainConfig& cfg) const;
};

// Accepts full | no-ifalign | no-eduattn | kl-only | align=mean|var|both |
// kd=kl|l1|mse. Throws ConfigError otherwise.
AblationCell parse_ablation_cell(std::string_view text);
// table4 | table5 | table6, or a comma-separated list of cells.
std::vector<AblationCell> ablation_grid(std::string_view spec);

struct AblationRow {
  AblationCell cell;
  Metrics metrics;
  RunLog log;
};

// Distills one student per cell from the same teacher and seed and
// evaluates it base-to-novel. Cells run on up to `jobs` threads; results
// are in grid order regardless of scheduling.
std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const TeacherModel& teacher,
                                      const Dataset& unlabeled, const Dataset& test,
                                      const SplitSpec& split, const std::vector<AblationCell>& grid,
                                      unsigned jobs = 1);

}  // namespace comkd
