#include <benchmark/benchmark.h>

#include <cfdist/inference.hpp>

#include "support/synth.hpp"

namespace {

void BM_GenWeights(benchmark::State& state) {
    cfdist::BootstrapPlan plan;
    plan.scheme = static_cast<cfdist::WeightScheme>(state.range(0));
    plan.k = 500;
    std::size_t rep = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cfdist::gen_weights(plan, 2000, rep++ % plan.replications));
    }
    state.SetLabel(cfdist::to_string(plan.scheme));
}
BENCHMARK(BM_GenWeights)->DenseRange(0, 4);

void BM_UniformBand(benchmark::State& state) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> e;
    const auto len = static_cast<std::size_t>(state.range(0));
    cfdist::FunctionalCurve est;
    for (std::size_t t = 0; t < len; ++t) {
        est.grid.push_back(static_cast<double>(t));
        est.values.push_back(0.0);
    }
    Eigen::MatrixXd draws(100, static_cast<Eigen::Index>(len));
    for (Eigen::Index i = 0; i < draws.size(); ++i) {
        draws.data()[i] = e(rng);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(cfdist::uniform_band(est, draws, 0.9));
    }
}
BENCHMARK(BM_UniformBand)->Arg(100)->Arg(1000);

void BM_BootstrapMean(benchmark::State& state) {
    const cfdist::GroupedDataset data(synth::location_scale({}, 1000, 1), synth::location_scale({}, 1000, 2), {"x"});
    cfdist::BootstrapPlan plan;
    plan.replications = 200;
    const cfdist::CurveStatistic mean = [](const cfdist::GroupedDataset& d) {
        return std::vector<double>{d.group(0).weights().dot(d.group(0).outcome())};
    };
    for (auto _ : state) {
        benchmark::DoNotOptimize(cfdist::bootstrap_curves(data, mean, plan));
    }
}
BENCHMARK(BM_BootstrapMean)->Unit(benchmark::kMillisecond);

} // namespace
BENCHMARK_MAIN();
