#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "dbo/dagm.hpp"
#include "dbo/dihgp.hpp"

using namespace dbo;

namespace {

struct Fixture {
  MixingMatrix W;
  BilevelProblem problem;
  StackedState state;
  BlockVector h;
};

const Fixture& fixture(int n) {
  static std::map<int, Fixture> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  constexpr int d = 16;
  std::mt19937_64 rng(n);
  std::normal_distribution<double> nd;
  Vec x(Eigen::Index(n) * d), y(Eigen::Index(n) * d);
  for (auto& v : x) v = nd(rng);
  for (auto& v : y) v = nd(rng);
  Fixture f{metropolis_weights(random_connected_graph(n, 0.1, 1)), random_quad_bilevel(n, d, d, 0.1, 2),
            StackedState{BlockVector(n, d, x), BlockVector(n, d, y)}, BlockVector(n, d, y)};
  return cache.emplace(n, std::move(f)).first->second;
}

Exec mode(const benchmark::State& st) { return st.range(1) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& st) { st.SetLabel(st.range(1) ? "parallel" : "serial"); }

void BM_InnerLoop(benchmark::State& st) {
  const Fixture& f = fixture(int(st.range(0)));
  for (auto _ : st) {
    benchmark::DoNotOptimize(inner_loop(f.problem, f.W, 0.05, f.state.x, f.state.y, 10, mode(st)));
  }
  label(st);
}

void BM_Dihgp(benchmark::State& st) {
  const Fixture& f = fixture(int(st.range(0)));
  for (auto _ : st) {
    benchmark::DoNotOptimize(dihgp(f.problem, f.W, 0.05, f.state, 5, mode(st), false).h);
  }
  label(st);
}

void BM_Hypergradient(benchmark::State& st) {
  const Fixture& f = fixture(int(st.range(0)));
  for (auto _ : st) {
    benchmark::DoNotOptimize(hypergradient(f.problem, f.W, 0.1, 0.05, f.state.x, f.state.y, f.h, mode(st)));
  }
  label(st);
}

void BM_OuterIterations(benchmark::State& st) {
  const Fixture& f = fixture(int(st.range(0)));
  RunConfig cfg;
  cfg.alpha = 0.01;
  cfg.beta = 0.05;
  cfg.U = 3;
  cfg.M = 5;
  cfg.K = 5;
  cfg.keep_states = false;
  cfg.exec = mode(st);
  for (auto _ : st) benchmark::DoNotOptimize(dagm_run(f.problem, f.W, cfg).final_state);
  label(st);
}

void sizes(benchmark::internal::Benchmark* b) {
  for (int n : {64, 256, 1024})
    for (int par : {0, 1}) b->Args({n, par});
  b->Unit(benchmark::kMillisecond)->UseRealTime();
}

}  // namespace

BENCHMARK(BM_InnerLoop)->Apply(sizes);
BENCHMARK(BM_Dihgp)->Apply(sizes);
BENCHMARK(BM_Hypergradient)->Apply(sizes);
BENCHMARK(BM_OuterIterations)->Apply(sizes);

BENCHMARK_MAIN();
