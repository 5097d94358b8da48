#include <benchmark/benchmark.h>

#include <random>

#include "exost/model.hpp"
#include "exost/runtime.hpp"
#include "exost/train.hpp"

using namespace exost;

namespace {

DTensor random_tensor(Shape shape, std::mt19937_64& rng) {
  DTensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.values) v = u(rng);
  return t;
}

ModelConfig config(BackboneKind backbone, std::size_t nodes, std::size_t hidden) {
  ModelConfig c;
  c.nodes = nodes;
  c.past_features = 3;
  c.future_features = 3;
  c.hidden = hidden;
  c.backbone = backbone;
  c.graph = GraphKind::adaptive;
  return c;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const DTensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    ad::Tape t;
    benchmark::DoNotOptimize(ad::matmul(t.constant(a), t.constant(b)).value().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

void forward_backward(benchmark::State& state, BackboneKind backbone, bool backward) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const ModelConfig c = config(backbone, 8, 32);
  Model model(c, 1);
  std::mt19937_64 rng(2);
  const DTensor x = random_tensor({batch, 8, 24, 1}, rng), ep = random_tensor({batch, 8, 24, 3}, rng),
                ef = random_tensor({batch, 8, 24, 3}, rng);
  for (auto _ : state) {
    ad::Tape t;
    ParamBinder bind(t, model.params());
    ForwardResult r = exost_forward(bind, model, t.constant(x), t.constant(ep), t.constant(ef), {});
    ad::Var loss = ad::mean_all(ad::abs(r.y_hat));
    if (backward) t.backward(loss);
    benchmark::DoNotOptimize(loss.value().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}

void BM_ForwardGru(benchmark::State& s) { forward_backward(s, BackboneKind::grugcn, false); }
void BM_ForwardBackwardGru(benchmark::State& s) { forward_backward(s, BackboneKind::grugcn, true); }
void BM_ForwardBackwardMixer(benchmark::State& s) { forward_backward(s, BackboneKind::mlp_mixer, true); }
BENCHMARK(BM_ForwardGru)->Arg(1)->Arg(32);
BENCHMARK(BM_ForwardBackwardGru)->Arg(1)->Arg(32);
BENCHMARK(BM_ForwardBackwardMixer)->Arg(1)->Arg(32);

void BM_AdamWStep(benchmark::State& state) {
  Model model(config(BackboneKind::grugcn, 8, 64), 3);
  for (auto& [name, p] : model.params()) p.grad.assign(p.values.size(), 1e-3);
  AdamW opt({});
  for (auto _ : state) {
    opt.step(model.params(), 1e-3);
    for (auto& [name, p] : model.params()) p.grad.assign(p.values.size(), 1e-3);
  }
}
BENCHMARK(BM_AdamWStep);

void BM_Metrics(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const DTensor y = random_tensor({1 << 16}, rng), yh = random_tensor({1 << 16}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(compute_metrics(y.values, yh.values).mae);
  state.SetItemsProcessed(state.iterations() * (1 << 16));
}
BENCHMARK(BM_Metrics);

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
