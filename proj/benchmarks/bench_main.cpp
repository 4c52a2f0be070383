#include <benchmark/benchmark.h>

#include <cmath>

#include "hcd/eval.hpp"
#include "hcd/pipeline.hpp"
#include "hcd/regressor.hpp"
#include "hcd/rng.hpp"
#include "hcd/synth.hpp"

namespace {

struct Scene {
  hcd::SyntheticPair pair;
  hcd::TrainingSet train;
  hcd::Raster x;
};

const Scene& scene() {
  static const Scene s = [] {
    hcd::SynthConfig cfg;
    cfg.height = 128;
    cfg.width = 128;
    auto pair = hcd::generate(cfg);
    const auto mask = hcd::fraction_sampler(pair.unchanged, 0.02)(1);
    auto x = hcd::normalize_channels(pair.x);
    auto train = hcd::extract_pairs(x, hcd::normalize_channels(pair.y), mask);
    return Scene{std::move(pair), std::move(train), std::move(x)};
  }();
  return s;
}

hcd::RegressorSpec spec_for(hcd::Method method) {
  auto spec = hcd::default_spec(method, 7);
  if (auto* h = std::get_if<hcd::HptHyper>(&spec.hyper)) {
    h->neighbours = 32;
    h->kernel_width = 10.0;
  }
  return spec;
}

void BM_Fit(benchmark::State& state) {
  const auto method = static_cast<hcd::Method>(state.range(0));
  const auto spec = spec_for(method);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hcd::fit(spec, scene().train));
  }
  state.SetLabel(std::string(hcd::to_string(method)) + " M=" + std::to_string(scene().train.rows()));
}

void BM_PredictRaster(benchmark::State& state) {
  const auto method = static_cast<hcd::Method>(state.range(0));
  const auto model = hcd::fit(spec_for(method), scene().train);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hcd::predict_raster(*model, scene().x));
  }
  state.SetLabel(std::string(hcd::to_string(method)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scene().x.pixel_count()));
}

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<std::uint8_t> truth(n);
  auto e = hcd::make_engine(3);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = std::floor(hcd::uniform01(e) * 1000.0);
    truth[i] = hcd::uniform01(e) < 0.1 ? 1 : 0;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(hcd::roc_auc(scores, truth));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_MedianFilter(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::vector<double> v(side * side);
  auto e = hcd::make_engine(4);
  for (auto& x : v) x = hcd::uniform01(e);
  const hcd::DistanceImage d(side, side, std::move(v));
  for (auto _ : state) {
    benchmark::DoNotOptimize(hcd::median_filter3(d));
  }
}

void methods(benchmark::internal::Benchmark* b) {
  for (int m = 0; m < 4; ++m) b->Arg(m);
}

}  // namespace

BENCHMARK(BM_Fit)->Apply(methods)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictRaster)->Apply(methods)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Auc)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_MedianFilter)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
