#include "comkd/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "comkd/errors.hpp"
#include "comkd/ifalign.hpp"
#include "comkd/ops.hpp"
#include "comkd/random.hpp"

namespace comkd {

namespace {

using Clock = std::chrono::steady_clock;

struct Batch {
  Tensor inputs;
  std::vector<int> labels;
};

Batch gather(const Dataset& data, std::span<const std::size_t> rows) {
  const std::size_t k = data.dim();
  std::vector<float> values(rows.size() * k);
  Batch b;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = data.inputs.data().subspan(rows[i] * k, k);
    std::copy(src.begin(), src.end(), values.begin() + static_cast<std::ptrdiff_t>(i * k));
    if (data.labels) b.labels.push_back((*data.labels)[rows[i]]);
  }
  b.inputs = Tensor::from({rows.size(), k}, std::move(values));
  return b;
}

// Minibatch index ranges over `order`.
template <typename Fn>
void for_each_batch(const std::vector<std::size_t>& order, std::size_t batch_size, Fn&& fn) {
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    fn(std::span<const std::size_t>(order.data() + start, end - start));
  }
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return order;
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t n = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (logits.at(row, j) > logits.at(row, best)) best = j;
  return best;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_input_dim(const TrainConfig& cfg, const Dataset& data) {
  if (data.dim() != cfg.input_dim) {
    throw ConfigError("data has width " + std::to_string(data.dim()) + " but input_dim is " +
                          std::to_string(cfg.input_dim),
                      "input_dim");
  }
}

EpochRecord teacher_pass(const TrainConfig& cfg, const TeacherModel& teacher, const Dataset& data,
                         std::size_t epoch) {
  double loss = 0.0;
  std::size_t batches = 0, correct = 0;
  for_each_batch(identity_order(data.size()), cfg.batch_size, [&](auto rows) {
    const Batch b = gather(data, rows);
    const LogitMatrix logits = teacher.logits(b.inputs);
    loss += cross_entropy(logits, b.labels).item();
    ++batches;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (static_cast<int>(argmax_row(logits.values, i)) == b.labels[i]) ++correct;
  });
  EpochRecord r;
  r.epoch = epoch;
  r.l_stu = static_cast<float>(loss / static_cast<double>(batches));
  r.l_final = r.l_stu;
  r.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

EpochRecord student_pass(const TrainConfig& cfg, const TeacherModel& teacher,
                         const StudentModel& student, const Dataset& data, std::size_t epoch) {
  double l_stu = 0.0, l_align = 0.0, l_final = 0.0;
  std::size_t batches = 0, correct = 0;
  const Tensor text = teacher.text_features();
  for_each_batch(identity_order(data.size()), cfg.batch_size, [&](auto rows) {
    const Batch b = gather(data, rows);
    const LossBreakdown lb = distillation_loss(cfg, teacher, student, b.inputs);
    l_stu += lb.l_stu.item();
    l_align += lb.l_align.item();
    l_final += lb.l_final.item();
    ++batches;
    const Tensor student_logits = student.predict(b.inputs).values;
    Tensor reference;
    if (!data.labels) reference = teacher.predict(b.inputs).values;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto target = data.labels ? static_cast<std::size_t>(b.labels[i]) : argmax_row(reference, i);
      if (argmax_row(student_logits, i) == target) ++correct;
    }
  });
  const double n = static_cast<double>(batches);
  EpochRecord r;
  r.epoch = epoch;
  r.l_stu = static_cast<float>(l_stu / n);
  r.l_align = static_cast<float>(l_align / n);
  r.l_final = static_cast<float>(l_final / n);
  r.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

void check_finite(const EpochRecord& r) {
  if (!std::isfinite(r.l_stu) || !std::isfinite(r.l_align) || !std::isfinite(r.l_final)) {
    throw InvariantError("non-finite loss at epoch " + std::to_string(r.epoch));
  }
}

}  // namespace

TeacherRun pretrain_teacher(const TrainConfig& cfg, const Dataset& labeled,
                            const EpochCallback& on_epoch) {
  validate(cfg);
  if (!labeled.labels) throw ParameterError("pretrain_teacher: dataset has no labels");
  if (labeled.size() == 0) throw ParameterError("pretrain_teacher: empty dataset");
  require_input_dim(cfg, labeled);
  std::vector<std::size_t> per_class(labeled.class_count, 0);
  for (int y : *labeled.labels) ++per_class.at(static_cast<std::size_t>(y));
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] == 0) {
      throw ParameterError("pretrain_teacher: class " + std::to_string(c) + " has no samples");
    }
  }

  const auto start = Clock::now();
  TeacherRun run{TeacherModel::init(cfg, labeled.class_count), {}};
  run.log.seed = cfg.seed;
  auto& teacher = run.model;
  const ParameterSet params = teacher.parameters();
  Rng shuffle_rng(derive_seed(cfg.seed, "teacher-shuffle"));
  auto record = [&](std::size_t epoch) {
    run.log.epochs.push_back(teacher_pass(cfg, teacher, labeled, epoch));
    check_finite(run.log.epochs.back());
    if (on_epoch) on_epoch(run.log.epochs.back());
  };

  record(0);
  std::vector<std::size_t> order = identity_order(labeled.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs_teacher; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    for_each_batch(order, cfg.batch_size, [&](auto rows) {
      const Batch b = gather(labeled, rows);
      cross_entropy(teacher.logits(b.inputs), b.labels).backward();
      sgd_step(params, cfg.lr_teacher);
    });
    record(epoch);
  }
  teacher.freeze();
  run.log.wall_seconds = seconds_since(start);
  return run;
}

LossBreakdown distillation_loss(const TrainConfig& cfg, const TeacherModel& teacher,
                                const StudentModel& student, const Tensor& batch) {
  const Tensor teacher_features = teacher.image_features(batch);
  const LogitMatrix q_t = clip_logits(teacher_features, teacher.text_features(), cfg.tau);
  const StudentModel::Forward s = student.forward(batch);
  const Tensor l_align = cfg.ifalign
                             ? align_term(align_loss(s.projected, teacher_features), cfg.align)
                             : Tensor::scalar(0.0f);
  const Tensor l_stu = refinement_loss(cfg.kd_loss, q_t, s.logits, cfg.tau);
  return final_loss(l_stu, l_align, cfg.lambda_align);
}

StudentRun distill_student(const TrainConfig& cfg, const TeacherModel& teacher,
                           const Dataset& unlabeled, const EpochCallback& on_epoch) {
  validate(cfg);
  if (!teacher.frozen()) throw InvariantError("distill_student: teacher must be frozen");
  if (teacher.feature_dim() != cfg.teacher_dim) {
    throw ConfigError("teacher features have width " + std::to_string(teacher.feature_dim()) +
                          " but teacher_dim is " + std::to_string(cfg.teacher_dim),
                      "teacher_dim");
  }
  if (teacher.input_dim() != cfg.input_dim) {
    throw ConfigError("teacher expects width " + std::to_string(teacher.input_dim()) +
                          " but input_dim is " + std::to_string(cfg.input_dim),
                      "input_dim");
  }
  if (unlabeled.size() == 0) throw ParameterError("distill_student: empty dataset");
  require_input_dim(cfg, unlabeled);

  const auto start = Clock::now();
  StudentRun run{StudentModel::init(cfg, teacher.text_features()), {}};
  run.log.seed = cfg.seed;
  auto& student = run.model;
  const ParameterSet params = student.parameters();
  Rng shuffle_rng(derive_seed(cfg.seed, "student-shuffle"));
  auto record = [&](std::size_t epoch) {
    run.log.epochs.push_back(student_pass(cfg, teacher, student, unlabeled, epoch));
    check_finite(run.log.epochs.back());
    if (on_epoch) on_epoch(run.log.epochs.back());
  };

  record(0);
  std::vector<std::size_t> order = identity_order(unlabeled.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs_student; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    for_each_batch(order, cfg.batch_size, [&](auto rows) {
      const Batch b = gather(unlabeled, rows);
      distillation_loss(cfg, teacher, student, b.inputs).l_final.backward();
      sgd_step(params, cfg.lr_student);
    });
    record(epoch);
  }
  run.log.wall_seconds = seconds_since(start);
  return run;
}

void AblationCell::apply(TrainConfig& cfg) const {
  cfg.ifalign = ifalign;
  cfg.eduattn = eduattn;
  cfg.kd_loss = kd_loss;
  cfg.align = align;
}

AblationCell parse_ablation_cell(std::string_view text) {
  AblationCell cell;
  cell.name = std::string(text);
  if (text == "full") return cell;
  if (text == "no-ifalign") {
    cell.ifalign = false;
    return cell;
  }
  if (text == "no-eduattn") {
    cell.eduattn = false;
    return cell;
  }
  if (text == "kl-only") {
    cell.ifalign = false;
    cell.eduattn = false;
    return cell;
  }
  if (text.rfind("align=", 0) == 0) {
    if (const auto kind = parse_align_kind(text.substr(6))) {
      cell.align = *kind;
      return cell;
    }
  }
  if (text.rfind("kd=", 0) == 0) {
    if (const auto kind = parse_kd_loss(text.substr(3))) {
      cell.kd_loss = *kind;
      return cell;
    }
  }
  throw ConfigError("unknown ablation switch '" + std::string(text) + "'", "grid");
}

std::vector<AblationCell> ablation_grid(std::string_view spec) {
  std::vector<std::string_view> names;
  if (spec == "table4") names = {"full", "no-ifalign", "no-eduattn", "kl-only"};
  else if (spec == "table5") names = {"align=mean", "align=var", "align=both"};
  else if (spec == "table6") names = {"kd=l1", "kd=mse", "kd=kl"};
  else {
    while (!spec.empty()) {
      const auto comma = spec.find(',');
      names.push_back(spec.substr(0, comma));
      spec = comma == std::string_view::npos ? std::string_view{} : spec.substr(comma + 1);
    }
  }
  if (names.empty()) throw ConfigError("empty ablation grid", "grid");
  std::vector<AblationCell> grid;
  for (auto n : names) grid.push_back(parse_ablation_cell(n));
  return grid;
}

std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const TeacherModel& teacher,
                                      const Dataset& unlabeled, const Dataset& test,
                                      const SplitSpec& split, const std::vector<AblationCell>& grid,
                                      unsigned jobs) {
  std::vector<AblationRow> rows(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        TrainConfig cell_cfg = cfg;
        grid[i].apply(cell_cfg);
        StudentRun run = distill_student(cell_cfg, teacher, unlabeled);
        rows[i] = {grid[i], evaluate_base_novel(run.model, test, split), std::move(run.log)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(grid.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

}  // namespace comkd
