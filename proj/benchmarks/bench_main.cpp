#include <benchmark/benchmark.h>

#include <vector>

#include "ame/distill.hpp"
#include "ame/numerics.hpp"
#include "ame/rng.hpp"
#include "ame/rsm.hpp"
#include "ame/synthgen.hpp"

namespace {

ame::Matrix random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  ame::Rng rng(seed);
  ame::Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = m.row(r);
    for (double& v : row) v = rng.normal();
    double n = ame::norm(row);
    for (double& v : row) v /= n;
  }
  return m;
}

void BM_Softmax(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<double> logits(n);
  ame::Rng rng(1);
  for (double& v : logits) v = rng.uniform(-5.0, 5.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ame::softmax(logits, 1.0));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Softmax)->RangeMultiplier(4)->Range(8, 2048)->Complexity();

void BM_ApplyProjections(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  ame::ProjectionPair params = ame::ProjectionPair::seeded(16, 8, 3, 1);
  ame::Matrix texts = random_unit_rows(4, 16, 2);
  ame::Matrix images = random_unit_rows(n, 16, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ame::apply_projections(params, texts, images));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ApplyProjections)->RangeMultiplier(4)->Range(8, 512)->Complexity();

void BM_TotalLossWithGradients(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  ame::Matrix images = random_unit_rows(batch, 16, 4);
  ame::TeacherModel teacher{random_unit_rows(4, 16, 5), 0.07};
  ame::StudentModel student = ame::StudentModel::seeded(4, 16, 6);
  ame::ProjectionPair projections = ame::ProjectionPair::seeded(16, 8, 3, 6);
  ame::TrainConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ame::total_loss(student, projections, images, nullptr, teacher, cfg));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TotalLossWithGradients)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void BM_TrainDefaultRun(benchmark::State& state) {
  ame::ClassGeometry geometry;
  ame::SyntheticDataset ds = ame::generate(geometry, 16, 1);
  ame::TeacherModel teacher = ame::make_prototype_teacher(ds);
  ame::TrainConfig cfg;
  cfg.epochs = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ame::train(ds, teacher, cfg));
  }
}
BENCHMARK(BM_TrainDefaultRun)->Arg(1)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
