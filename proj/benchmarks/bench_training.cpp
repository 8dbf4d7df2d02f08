#include <benchmark/benchmark.h>

#include "protomil/dataset.hpp"
#include "protomil/model.hpp"
#include "protomil/optim.hpp"
#include "protomil/trainer.hpp"

using namespace protomil;

namespace {

Dataset synthetic(std::size_t n_bags, std::size_t width) {
  SyntheticConfig c;
  c.n_bags = n_bags;
  c.feature_count = width;
  c.seed = 1;
  return gen_synthetic(c);
}

// One forward, backward and Adam update on a single bag of width arg(0).
void BM_TrainStep(benchmark::State& state) {
  const Dataset data = synthetic(2, static_cast<std::size_t>(state.range(0)));
  Hyperparams h;
  ModelParams p = make_params(init_prototypes(data, h.prototype_count, h.init, 1), h.aggregators);
  OptimizerState opt{AdamState(p.prototypes.size()), AdamState(p.beta.size()), AdamState(1)};
  const GroupConfig proto_cfg{h.lr_prototypes};
  const GroupConfig weight_cfg{h.lr_weights};
  const Bag& bag = data[0];
  for (auto _ : state) {
    const ForwardResult f = forward(bag, p, h);
    const Gradients g = backward(bag, bag.label, p, h, f.cache);
    adam_step(p.prototypes.values(), g.d_prototypes.values(), opt.prototypes, proto_cfg);
    adam_step(p.beta, g.d_beta, opt.beta, weight_cfg);
    adam_step(std::span<double>(&p.beta0, 1), std::span<const double>(&g.d_beta0, 1), opt.beta0,
              weight_cfg);
  }
}
BENCHMARK(BM_TrainStep)->Arg(10)->Arg(166);

// Full training run: 100 bags, 10 epochs.
void BM_TrainEpochs(benchmark::State& state) {
  const Dataset data = synthetic(100, 10);
  Hyperparams h;
  h.epochs = 10;
  for (auto _ : state) benchmark::DoNotOptimize(train(data, h, 1));
}
BENCHMARK(BM_TrainEpochs)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
