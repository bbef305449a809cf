#include <benchmark/benchmark.h>

#include "fsl/backbone/pretrain.hpp"
#include "fsl/datakit/episode.hpp"
#include "fsl/fewshot/evaluate.hpp"
#include "fsl/metrics/hardness.hpp"
#include "fsl/metrics/stats.hpp"

namespace bb = fsl::backbone;
namespace dk = fsl::datakit;
namespace fw = fsl::fewshot;

namespace {

struct Fixture {
  dk::Dataset data;
  dk::ClassSplit split;
  bb::Backbone backbone;
};

// Built once: 60 classes, small pre-trained backbone.
const Fixture& fixture() {
  static const Fixture f = [] {
    dk::SyntheticSpec spec;
    spec.n_classes = 60;
    spec.samples_per_class = 40;
    spec.noise_sigma = 1.0;
    auto data = dk::make_synthetic(spec);
    auto split = dk::split_classes(data, {0.6, 0.2, 0.2}, 1);
    bb::PretrainConfig pc;
    pc.cycle_epochs = {2, 2};
    auto backbone = bb::pretrain(data, split.train, pc).backbone;
    return Fixture{std::move(data), std::move(split), std::move(backbone)};
  }();
  return f;
}

dk::Episode episode(std::uint32_t way) {
  auto rng = dk::CounterRng::substream(5, "bench", way);
  return dk::sample_episode(fixture().data, fixture().split.test, {way, 1, 15}, rng);
}

}  // namespace

static void BM_EvaluateEpisode(benchmark::State& state) {
  const auto method = fw::kAllMethods[state.range(0)];
  const auto ep = episode(static_cast<std::uint32_t>(state.range(1)));
  const fw::AdaptConfig config;
  state.SetLabel(std::string(fw::to_string(method)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fw::evaluate_episode(fixture().backbone, ep, method, config));
  }
}
BENCHMARK(BM_EvaluateEpisode)
    ->ArgsProduct({{0, 1, 2}, {5, 10}})
    ->Unit(benchmark::kMillisecond);

static void BM_Hardness(benchmark::State& state) {
  const auto ep = episode(static_cast<std::uint32_t>(state.range(0)));
  const fsl::metrics::ReferenceExtractor phi{fixture().backbone, {}};
  for (auto _ : state) benchmark::DoNotOptimize(fsl::metrics::hardness(ep, phi));
}
BENCHMARK(BM_Hardness)->Arg(5)->Arg(10);

static void BM_Summarize(benchmark::State& state) {
  dk::CounterRng rng(2);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (double& x : v) x = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(fsl::metrics::summarize(v));
}
BENCHMARK(BM_Summarize)->Arg(200)->Arg(10000);

static void BM_SampleEpisode(benchmark::State& state) {
  const auto& f = fixture();
  std::uint64_t i = 0;
  for (auto _ : state) {
    auto rng = dk::CounterRng::substream(9, "bench-sample", i++);
    benchmark::DoNotOptimize(dk::sample_episode(f.data, f.split.test, {5, 5, 15}, rng));
  }
}
BENCHMARK(BM_SampleEpisode);
