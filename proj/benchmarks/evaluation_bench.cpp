#include <defect_sage/evaluation.hpp>

#include <benchmark/benchmark.h>

#include <random>

namespace ev = defect_sage::eval;

static void BM_Metrics(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> label(0, 4), agree(0, 9);
  std::vector<ev::LabeledRecord> records;
  for (int i = 0; i < state.range(0); ++i) {
    const auto ref = "c" + std::to_string(label(rng));
    records.push_back({std::to_string(i), ref, agree(rng) < 8 ? ref : "c" + std::to_string(label(rng))});
  }
  for (auto _ : state) {
    const auto m = ev::build_confusion(records);
    benchmark::DoNotOptimize(ev::compute_metrics(m));
    benchmark::DoNotOptimize(ev::cohens_kappa(m));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Metrics)->Arg(200)->Arg(10000);
