#include <defect_sage/query.hpp>

#include <benchmark/benchmark.h>

#include <random>
#include <string>

namespace q = defect_sage::query;

static void BM_SimilarityShort(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(q::similarity_ratio("porsity", "Porosity"));
}
BENCHMARK(BM_SimilarityShort);

static void BM_SimilarityRandom(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> ch('a', 'h');
  const auto n = static_cast<std::size_t>(state.range(0));
  std::string a(n, 'a'), b(n, 'a');
  for (auto& c : a) c = static_cast<char>(ch(rng));
  for (auto& c : b) c = static_cast<char>(ch(rng));
  for (auto _ : state) benchmark::DoNotOptimize(q::similarity_ratio(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SimilarityRandom)->RangeMultiplier(4)->Range(8, 512)->Complexity();
