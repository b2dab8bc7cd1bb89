#include <benchmark/benchmark.h>

#include "comkd/ops.hpp"
#include "comkd/trainer.hpp"

using namespace comkd;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::vector<float> v(rows * cols);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor::from({rows, cols}, std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_RowSoftmax(benchmark::State& state) {
  const Tensor x = random_matrix(static_cast<std::size_t>(state.range(0)), 8, 3);
  for (auto _ : state) benchmark::DoNotOptimize(row_softmax(x, 1.0f));
}
BENCHMARK(BM_RowSoftmax)->Arg(32)->Arg(512);

void BM_MatmulBackward(benchmark::State& state) {
  const Tensor a = random_matrix(32, 32, 4, true), b = random_matrix(32, 32, 5, true);
  for (auto _ : state) sum(matmul(a, b)).backward();
}
BENCHMARK(BM_MatmulBackward);

// One forward, backward and SGD update of the full distillation objective
// on a default-sized batch.
void BM_DistillationStep(benchmark::State& state) {
  TrainConfig cfg;
  TeacherModel teacher = TeacherModel::init(cfg, 8);
  teacher.freeze();
  StudentModel student = StudentModel::init(cfg, teacher.text_features());
  SyntheticSpec spec;
  spec.per_class = 4;
  const Dataset batch = gen_synthetic(spec);
  for (auto _ : state) {
    for (auto p : student.parameters()) p.zero_grad();
    distillation_loss(cfg, teacher, student, batch.inputs).l_final.backward();
    sgd_step(student.parameters(), cfg.lr_student);
  }
}
BENCHMARK(BM_DistillationStep);

void BM_DistillOneEpoch(benchmark::State& state) {
  TrainConfig cfg;
  cfg.epochs_teacher = 1;
  cfg.epochs_student = 1;
  const Dataset train = gen_synthetic(SyntheticSpec{});
  const TeacherModel teacher = pretrain_teacher(cfg, train).model;
  const Dataset unlabeled = train.without_labels();
  for (auto _ : state) benchmark::DoNotOptimize(distill_student(cfg, teacher, unlabeled));
}
BENCHMARK(BM_DistillOneEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
