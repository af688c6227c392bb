// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "sysid/datasets.hpp"
#include "sysid/gradient.hpp"
#include "sysid/trainer.hpp"

using namespace sysid;

namespace {

ModelSpec rnn(int n_x)
{
    ModelSpec s;
    s.n_x = n_x;
    s.n_u = 2;
    s.n_y = 2;
    s.fx_layers = {16};
    s.fy_layers = {16};
    s.activation = Activation::swish;
    return s;
}

// `experiments` equal-length chunks of one simulated record
Dataset chunked(int experiments, int length)
{
    const Dataset whole = gen_order_reduction(3, experiments * length).data;
    Dataset d;
    for (int j = 0; j < experiments; ++j) {
        d.experiments.push_back({whole.experiments[0].U.middleRows(j * length, length),
                                 whole.experiments[0].Y.middleRows(j * length, length)});
    }
    return d;
}

Vec start_point(const ParamLayout& layout)
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.1);
    Vec v(layout.size());
    for (auto& x : v) x = n(rng);
    return v;
}

template <LossGradient (*Kernel)(const Vec&, const ParamLayout&, const Dataset&, const SaturationConfig&,
                                 const OutputLoss*)>
void BM_loss_and_grad(benchmark::State& state)
{
    const int experiments = static_cast<int>(state.range(0));
    const ModelSpec spec = rnn(6);
    const Dataset d = chunked(experiments, 400);
    const ParamLayout layout(spec, experiments);
    const Vec v = start_point(layout);
    const SaturationConfig sat;
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(v, layout, d, sat, nullptr));
    state.SetItemsProcessed(state.iterations() * experiments * 400);
}

void BM_fit(benchmark::State& state)
{
    const Dataset d = gen_order_reduction(1, 1000).data;
    ModelSpec spec;
    spec.n_x = 4;
    spec.n_u = 2;
    spec.n_y = 2;
    TrainConfig cfg;
    cfg.n_starts = 4;
    cfg.seed = 2;
    cfg.adam.iters = 100;
    cfg.lbfgsb.max_fun_evals = 100;
    cfg.jobs = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(fit(spec, d, cfg));
}

} // namespace

BENCHMARK_TEMPLATE(BM_loss_and_grad, loss_and_grad_serial)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_loss_and_grad, loss_and_grad)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_fit)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
