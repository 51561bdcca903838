#include <benchmark/benchmark.h>

#include "mmgl/agl.hpp"
#include "mmgl/data.hpp"
#include "mmgl/random.hpp"
#include "mmgl/synthetic.hpp"
#include "mmgl/trainer.hpp"

namespace {

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  mmgl::Rng rng(1);
  const mmgl::Matrix a = mmgl::normal_matrix(n, n, 1.0, rng);
  const mmgl::Matrix b = mmgl::normal_matrix(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mmgl::matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256)->Complexity();

void BM_LearnGraph(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  mmgl::Rng rng(2);
  const mmgl::Matrix h = mmgl::normal_matrix(n, 25, 1.0, rng);
  const auto params = mmgl::GraphLearnerParams::init(25, 0, 0.5, 1.0, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mmgl::learn_graph(h, params));
}
BENCHMARK(BM_LearnGraph)->Arg(64)->Arg(256)->Arg(512);

void BM_TrainEpoch(benchmark::State& state) {
  mmgl::SyntheticSpec spec;
  spec.num_patients = static_cast<std::size_t>(state.range(0));
  const mmgl::MultiModalDataset ds = mmgl::synthetic_generate(spec);
  const auto rows = mmgl::all_rows(ds.size());
  const mmgl::MultiModalDataset data = mmgl::preprocess(ds, rows);
  mmgl::TrainConfig cfg;
  const mmgl::TrainSplit split{rows, {}};
  mmgl::ModelState model = mmgl::ModelState::init(mmgl::shape_of(data), cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        mmgl::train_epoch(model, data, split, cfg, mmgl::InferenceMode::kInductive));
  }
}
BENCHMARK(BM_TrainEpoch)->Arg(150)->Arg(300)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
