#include <benchmark/benchmark.h>

#include "fsl/datakit/rng.hpp"
#include "fsl/ndgrad/graph.hpp"
#include "fsl/ndgrad/ops.hpp"

namespace nd = fsl::ndgrad;

namespace {

nd::Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  fsl::datakit::CounterRng rng(seed);
  nd::Tensor t(nd::Shape{r, c});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

static void BM_MatmulForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) {
    nd::Graph g;
    benchmark::DoNotOptimize(nd::matmul(g.constant(a), g.constant(b)).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_MatmulForward)->RangeMultiplier(2)->Range(16, 128);

static void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) {
    nd::Graph g;
    auto loss = nd::sum(nd::matmul(g.parameter(a), g.parameter(b)));
    auto grads = g.backward(loss);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(16, 128);

// Forward and backward of the transductive objective's core: softmax entropy
// of cosine logits.
static void BM_EntropyHeadBackward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto x = random_matrix(rows, 64, 3), w = random_matrix(5, 64, 4);
  for (auto _ : state) {
    nd::Graph g;
    auto e = nd::l2_normalize(nd::relu(g.parameter(x)));
    auto logits = nd::matmul(e, nd::transpose(g.parameter(w)));
    auto grads = g.backward(nd::mean(nd::softmax_entropy_rows(logits)));
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_EntropyHeadBackward)->Arg(75)->Arg(300);
