#include <benchmark/benchmark.h>

#include "trafficshape/engine.hpp"
#include "trafficshape/lp_dual.hpp"
#include "trafficshape/traffic_model.hpp"

using namespace trafficshape;

namespace {

struct Corpus {
  std::vector<SessionInstance> stream;
  ConstraintSpec spec;
};

Corpus make_corpus(int m, int n) {
  GeneratorConfig config;
  config.m = m;
  config.n = n;
  config.seed = 99;
  Corpus corpus;
  corpus.stream = generate_stream(config);
  corpus.spec = calibrate_targets(corpus.stream, config);
  return corpus;
}

void BM_SampledDualSolve(benchmark::State& state) {
  const int nhat = int(state.range(0));
  static Corpus corpus = make_corpus(20, 800);
  SampledLpConfig lp;
  lp.epsilon = double(nhat) / 2000.0;
  lp.nu = 1.05;
  std::span<const SessionInstance> sample(corpus.stream.data(), size_t(nhat));
  for (auto _ : state) {
    DualSolveReport report = solve_sampled_dual(sample, corpus.spec, lp);
    benchmark::DoNotOptimize(report.dual_value);
  }
}
BENCHMARK(BM_SampledDualSolve)->Arg(100)->Arg(400)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_ServeSession(benchmark::State& state) {
  static Corpus corpus = make_corpus(int(state.range(0)), 64);
  EngineConfig config;
  config.horizon = 64;
  config.epsilon = 0.0;
  DualPrices prices{std::vector<double>(corpus.spec.targets.size(), 0.4)};
  size_t k = 0;
  ShapingEngine engine = ShapingEngine::with_prices(corpus.spec, config, prices);
  for (auto _ : state) {
    if (k == 64) {
      state.PauseTiming();
      engine = ShapingEngine::with_prices(corpus.spec, config, prices);
      k = 0;
      state.ResumeTiming();
    }
    ServeDecision decision = engine.serve(corpus.stream[k++]);
    benchmark::DoNotOptimize(decision.reward);
  }
}
BENCHMARK(BM_ServeSession)->Arg(20);

}  // namespace

BENCHMARK_MAIN();
