#include <benchmark/benchmark.h>

#include <cfdist/counterfactual.hpp>
#include <cfdist/estimators.hpp>

#include "support/synth.hpp"

namespace {

const synth::LocationScale kDgp{1.0, 2.0, 0.5, 1.0, 0.0, 1.0};

void BM_QuantileRegressionSolve(benchmark::State& state) {
    const auto sample = synth::location_scale(kDgp, static_cast<std::size_t>(state.range(0)), 11);
    const Eigen::MatrixXd z = sample.design();
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            cfdist::solve_quantile_regression(z, sample.outcome(), sample.weights(), 0.37));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_QuantileRegressionSolve)->RangeMultiplier(4)->Range(128, 8192)->Complexity();

void BM_QuantileRegressionGrid(benchmark::State& state) {
    const auto sample = synth::location_scale(kDgp, 1000, 12);
    const auto grid = cfdist::default_u_grid(0.02, 0.98, 0.01);
    cfdist::FitOptions options;
    options.threads = static_cast<unsigned>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(cfdist::fit_quantile_regression(sample, grid, options));
    }
}
BENCHMARK(BM_QuantileRegressionGrid)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_DistributionRegression(benchmark::State& state) {
    const auto sample = synth::location_scale(kDgp, static_cast<std::size_t>(state.range(0)), 13);
    std::vector<double> y_grid;
    for (int k = 0; k < 100; ++k) {
        y_grid.push_back(-1.0 + 0.06 * k);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(cfdist::fit_distribution_regression(sample, y_grid));
    }
}
BENCHMARK(BM_DistributionRegression)->Arg(500)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_MarginalFromQuantiles(benchmark::State& state) {
    const auto sample = synth::location_scale(kDgp, 2000, 14);
    auto model = std::make_shared<const cfdist::ConditionalQuantileModel>(
        cfdist::fit_quantile_regression(sample, cfdist::default_u_grid(0.02, 0.98, 0.01)));
    std::vector<double> y_grid;
    for (int k = 0; k < 500; ++k) {
        y_grid.push_back(-1.0 + 0.012 * k);
    }
    const auto cdf = cfdist::qf_to_cdf(model, y_grid);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cfdist::marginal_cdf(cdf, sample));
    }
}
BENCHMARK(BM_MarginalFromQuantiles)->Unit(benchmark::kMillisecond);

} // namespace
