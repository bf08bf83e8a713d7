#include <doctest.h>

#include <mutex>
#include <random>

#include <cfdist/error.hpp>
#include <cfdist/inference.hpp>

#include "support/synth.hpp"

using namespace cfdist;

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

FunctionalCurve curve(std::vector<double> values) {
    FunctionalCurve c;
    for (std::size_t t = 0; t < values.size(); ++t) c.grid.push_back(static_cast<double>(t));
    c.values = std::move(values);
    return c;
}

Eigen::MatrixXd normal_draws(std::size_t rows, const std::vector<double>& centre, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> e(0.0, sd);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(centre.size()));
    for (Eigen::Index b = 0; b < m.rows(); ++b)
        for (Eigen::Index t = 0; t < m.cols(); ++t) m(b, t) = centre[static_cast<std::size_t>(t)] + e(rng);
    return m;
}

} // namespace

TEST_CASE("weight schemes") {
    BootstrapPlan plan;
    plan.master_seed = 99;

    SUBCASE("multinomial totals") {
        const auto w = gen_weights(plan, 4, 0);
        CHECK(std::accumulate(w.begin(), w.end(), 0.0) == 4.0);
        for (double v : w) CHECK(v == std::floor(v));
    }
    SUBCASE("k of n") {
        plan.scheme = WeightScheme::k_of_n;
        plan.k = 25;
        const auto w = gen_weights(plan, 100, 3);
        const double m = mean_of(w);
        CHECK(m * m == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(plan.deviation_scale(100) == doctest::Approx(0.5));
    }
    SUBCASE("subsample") {
        plan.scheme = WeightScheme::subsample;
        plan.k = 50;
        const auto w = gen_weights(plan, 100, 1);
        CHECK(std::count(w.begin(), w.end(), 2.0) == 50);
        CHECK(std::count(w.begin(), w.end(), 0.0) == 50);
    }
    SUBCASE("bayesian weights average exactly one") {
        plan.scheme = WeightScheme::bayesian;
        const auto w = gen_weights(plan, 1000, 0);
        CHECK(mean_of(w) == doctest::Approx(1.0).epsilon(1e-12));
        for (double v : w) CHECK(v > 0.0);
    }
    SUBCASE("wild laws have mean and variance near one") {
        plan.scheme = WeightScheme::wild;
        for (auto law : {WildLaw::exponential, WildLaw::poisson}) {
            plan.wild_law = law;
            const auto w = gen_weights(plan, 20000, 0);
            const double m = mean_of(w);
            double v = 0.0;
            for (double x : w) v += (x - m) * (x - m);
            CHECK(m == doctest::Approx(1.0).epsilon(0.03));
            CHECK(v / w.size() == doctest::Approx(1.0).epsilon(0.05));
        }
    }
    SUBCASE("streams are pure functions of (seed, replication, stream)") {
        CHECK(gen_weights(plan, 50, 7, 0) == gen_weights(plan, 50, 7, 0));
        CHECK(gen_weights(plan, 50, 7, 0) != gen_weights(plan, 50, 7, 1));
        CHECK(gen_weights(plan, 50, 7, 0) != gen_weights(plan, 50, 8, 0));
    }
    SUBCASE("invalid plans") {
        plan.scheme = WeightScheme::k_of_n;
        plan.k = 0;
        CHECK_THROWS_AS(plan.validate(100), ConfigError);
        plan.scheme = WeightScheme::subsample;
        plan.k = 100;
        CHECK_THROWS_AS(plan.validate(100), ConfigError);
        plan.replications = 0;
        CHECK_THROWS_AS(plan.validate(100), ConfigError);
    }
}

TEST_CASE("bootstrap driver") {
    const GroupedDataset data(synth::location_scale({}, 200, 1), synth::location_scale({}, 150, 2), {"x"});
    const CurveStatistic mean0 = [](const GroupedDataset& d) {
        return std::vector<double>{d.group(0).weights().dot(d.group(0).outcome())};
    };

    SUBCASE("unit weights reproduce the point estimate") {
        BootstrapPlan plan;
        plan.scheme = WeightScheme::unit;
        plan.replications = 1;
        const auto draws = bootstrap_curves(data, mean0, plan);
        CHECK(draws.draws(0, 0) == mean0(data)[0]);
    }
    SUBCASE("constant statistic") {
        BootstrapPlan plan;
        plan.replications = 10;
        const auto draws = bootstrap_curves(data, [](const GroupedDataset&) { return std::vector<double>{1, 2}; }, plan);
        for (Eigen::Index b = 0; b < draws.draws.rows(); ++b) CHECK(draws.draws.row(b) == draws.draws.row(0));
    }
    SUBCASE("bootstrap standard error of the mean") {
        BootstrapPlan plan;
        plan.replications = 500;
        plan.master_seed = 5;
        const auto draws = bootstrap_curves(data, mean0, plan);
        const auto& y = data.group(0).outcome();
        const double sd = std::sqrt((y.array() - y.mean()).square().sum() / (y.size() - 1));
        const double boot_mean = draws.draws.col(0).mean();
        const double boot_sd = std::sqrt((draws.draws.col(0).array() - boot_mean).square().mean());
        CHECK(boot_sd == doctest::Approx(sd / std::sqrt(200.0)).epsilon(0.25));
    }
    SUBCASE("thread count does not change the draws") {
        BootstrapPlan plan;
        plan.replications = 40;
        plan.scheme = WeightScheme::bayesian;
        CHECK(bootstrap_curves(data, mean0, plan, 1).draws == bootstrap_curves(data, mean0, plan, 4).draws);
    }
    SUBCASE("failures within budget are dropped, beyond it raise") {
        BootstrapPlan plan;
        plan.replications = 20;
        int calls = 0;
        std::mutex mu;
        const CurveStatistic flaky = [&](const GroupedDataset& d) {
            std::lock_guard lock(mu);
            if (calls++ == 3) throw NumericalError("boom");
            return mean0(d);
        };
        const auto draws = bootstrap_curves(data, flaky, plan);
        CHECK(draws.failed.size() == 1);
        CHECK(draws.replications.size() == 19);
        const CurveStatistic broken = [](const GroupedDataset&) -> std::vector<double> {
            throw NumericalError("always");
        };
        CHECK_THROWS_AS(bootstrap_curves(data, broken, plan), NumericalError);
    }
}

TEST_CASE("uniform bands") {
    const std::vector<double> est(30, 1.0);
    const auto draws = normal_draws(200, est, 0.1, 3);

    SUBCASE("shape invariants") {
        const auto band = uniform_band(curve(est), draws, 0.9);
        for (std::size_t t = 0; t < est.size(); ++t) {
            CHECK(band.lower.values[t] <= est[t]);
            CHECK(band.upper.values[t] >= est[t]);
            CHECK(band.upper.values[t] - est[t] ==
                  doctest::Approx(band.critical_value * band.pointwise_se.values[t]));
            CHECK(est[t] - band.lower.values[t] == doctest::Approx(band.upper.values[t] - est[t]));
        }
        CHECK(band.pointwise_se.values[0] == doctest::Approx(0.1).epsilon(0.2));
    }
    SUBCASE("nesting across levels") {
        const auto b90 = uniform_band(curve(est), draws, 0.9);
        const auto b95 = uniform_band(curve(est), draws, 0.95);
        for (std::size_t t = 0; t < est.size(); ++t) {
            CHECK(b95.lower.values[t] <= b90.lower.values[t]);
            CHECK(b95.upper.values[t] >= b90.upper.values[t]);
        }
    }
    SUBCASE("uniform critical value dominates the pointwise ones") {
        const auto band = uniform_band(curve(est), draws, 0.9);
        for (double c : pointwise_critical_values(curve(est), draws, 0.9)) CHECK(band.critical_value >= c);
    }
    SUBCASE("single grid point is a percentile-t interval") {
        const auto one = draws.leftCols(1);
        const auto band = uniform_band(curve({1.0}), one, 0.9);
        CHECK(band.critical_value == pointwise_critical_values(curve({1.0}), one, 0.9)[0]);
    }
    SUBCASE("no variation") {
        const Eigen::MatrixXd same = Eigen::MatrixXd::Constant(25, 30, 1.0);
        const auto band = uniform_band(curve(est), same, 0.9);
        CHECK(band.critical_value == 0.0);
        CHECK(band.lower.values == est);
        CHECK(band.upper.values == est);
        const std::vector<double> zero(30, 0.0);
        const auto flat = uniform_band(curve(zero), Eigen::MatrixXd::Zero(25, 30), 0.9);
        CHECK(flat.upper.values == zero);
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(uniform_band(curve(est), draws.topRows(19), 0.9), ConfigError);
        CHECK_THROWS_AS(uniform_band(curve(est), draws, 0.4), ConfigError);
        CHECK_THROWS_AS(uniform_band(curve(est), draws.leftCols(3), 0.9), ConfigError);
    }
}

TEST_CASE("KS tests") {
    SUBCASE("zero effect, symmetric draws") {
        const std::vector<double> zero(20, 0.0);
        const auto draws = normal_draws(200, zero, 0.1, 4);
        CHECK(ks_test(curve(zero), draws, KsNull::no_effect).p_value == 1.0);
    }
    SUBCASE("constant shift") {
        const std::vector<double> three(20, 3.0);
        const auto draws = normal_draws(200, three, 0.01, 5);
        CHECK(ks_test(curve(three), draws, KsNull::no_effect).p_value < 0.01);
        CHECK(ks_test(curve(three), draws, KsNull::constant_effect).p_value > 0.1);
        CHECK(ks_test(curve(three), draws, KsNull::positive_effect).p_value == 1.0);
    }
    SUBCASE("negative effect rejects positivity") {
        const std::vector<double> neg(20, -1.0);
        const auto draws = normal_draws(200, neg, 0.05, 6);
        CHECK(ks_test(curve(neg), draws, KsNull::positive_effect).p_value < 0.01);
    }
    CHECK(parse_ks_null("constant_effect") == KsNull::constant_effect);
    CHECK(parse_weight_scheme("k_of_n") == WeightScheme::k_of_n);
    CHECK_THROWS_AS(parse_weight_scheme("jackknife"), ConfigError);
}
