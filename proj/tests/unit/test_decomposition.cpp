#include <doctest.h>

#include <random>

#include <cfdist/decomposition.hpp>
#include <cfdist/error.hpp>

#include "support/synth.hpp"

using namespace cfdist;

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> g;
    for (int k = 0; k < n; ++k) g.push_back(lo + (hi - lo) * k / (n - 1));
    return g;
}

std::shared_ptr<const ConditionalDistributionModel> dr(const GroupSample& s, const std::vector<double>& grid) {
    return std::make_shared<const ConditionalDistributionModel>(rearrange(fit_distribution_regression(s, grid)));
}

// Covariates (union, x); union ~ Bernoulli(share) independent of x ~ U(lo, lo + 1).
GroupSample unionised(std::size_t n, std::uint64_t seed, double share, double lo, double premium) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> e;
    const auto m = static_cast<Eigen::Index>(n);
    Eigen::VectorXd y(m);
    Eigen::MatrixXd x(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
        x(i, 0) = u01(rng) < share ? 1.0 : 0.0;
        x(i, 1) = lo + u01(rng);
        y[i] = 1.0 + x(i, 1) + premium * x(i, 0) + 0.5 * e(rng);
    }
    return {y, x, Eigen::VectorXd::Ones(m)};
}

DecompositionConfig base_config(const std::vector<double>& y_grid, double m_old, double m_new) {
    DecompositionConfig c;
    c.grids.u_grid = default_u_grid(0.05, 0.95, 0.05);
    c.grids.y_grid = y_grid;
    c.policy = {MinimumWageStrategy::ratio_scaling, m_old, m_new};
    c.functionals = {Functional::quantile, Functional::cdf, Functional::mean, Functional::variance,
                     Functional::gini};
    return c;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

} // namespace

TEST_CASE("threshold alignment") {
    const std::vector<double> grid{1.0, 1.5, 2.0};
    CHECK(align_threshold(grid, 1.5).index == 1);
    CHECK(align_threshold(grid, 1.5).exact);
    CHECK(align_threshold(grid, 1.5 - 1e-14).index == 1);
    const auto between = align_threshold(grid, 1.9);
    CHECK(between.index == 1);
    CHECK(between.grid_value == 1.5);
    CHECK_FALSE(between.exact);
    CHECK(align_threshold(grid, 7.0).index == 2);
    CHECK_THROWS_AS(align_threshold(grid, 0.5), DomainError);
}

TEST_CASE("minimum-wage counterfactual") {
    const auto grid = linspace(-1.0, 4.0, 41);
    const auto recent = dr(synth::location_scale({1.4, 1, 0.6, 0}, 500, 3), grid);
    const auto base = dr(synth::location_scale({1.0, 1, 0.8, 0}, 500, 4), grid);
    const double m = grid[12];
    const std::vector<double> x{0.4};

    SUBCASE("ratio scaling against the hand formula") {
        const auto cf = impose_minimum_wage(recent, base, MinimumWageStrategy::ratio_scaling, m);
        const auto row = cf.cdf_row(x);
        const auto s = recent->cdf_row(x);
        const auto b = base->cdf_row(x);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const double expected = k < 12 ? s[12] * b[k] / b[12] : s[k];
            CHECK(row[k] == doctest::Approx(expected).epsilon(1e-12));
        }
        CHECK(cf.rule.threshold_index == 12);
    }
    SUBCASE("same model on both sides is a no-op") {
        const auto cf = impose_minimum_wage(recent, recent, MinimumWageStrategy::ratio_scaling, m);
        const auto row = cf.cdf_row(x);
        const auto s = recent->cdf_row(x);
        for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(row[k] - s[k]) < 1e-12);
    }
    SUBCASE("continuity at the minimum") {
        const auto cf = impose_minimum_wage(recent, base, MinimumWageStrategy::ratio_scaling, m);
        CHECK(cf.cdf_row(x)[12] == recent->cdf_row(x)[12]);
    }
    SUBCASE("censoring removes mass below the minimum") {
        const auto cf = impose_minimum_wage(recent, base, MinimumWageStrategy::censoring, m);
        const auto row = cf.cdf_row(x);
        const auto s = recent->cdf_row(x);
        for (std::size_t k = 0; k < 12; ++k) CHECK(row[k] == 0.0);
        for (std::size_t k = 12; k < grid.size(); ++k) CHECK(row[k] == s[k]);
    }
    SUBCASE("policy helper uses the base-period minimum") {
        const auto cf = minwage_counterfactual_cdf(recent, base, {MinimumWageStrategy::ratio_scaling, m, 99.0});
        CHECK(cf.rule.minimum == m);
    }
    SUBCASE("grid mismatch") {
        auto shifted = linspace(-1.0, 4.0, 41);
        shifted[3] += 0.01;
        const auto other = dr(synth::location_scale({}, 200, 5), shifted);
        CHECK_THROWS_AS(impose_minimum_wage(recent, other, MinimumWageStrategy::ratio_scaling, m), DomainError);
        CHECK_THROWS_AS(impose_minimum_wage(recent, base, MinimumWageStrategy::ratio_scaling, -5.0), DomainError);
    }
}

TEST_CASE("union reweighting") {
    const auto grid = linspace(0.0, 4.0, 41);
    const auto s = unionised(800, 8, 0.3, 0.0, 0.4);
    const auto model = dr(s, grid);

    SUBCASE("indicator probability reproduces the plain marginal") {
        const auto p = [](std::span<const double> x) { return x[0]; };
        const auto a = union_reweighted_cdf(*model, 0, p, s);
        const auto b = marginal_cdf(*model, s).distribution;
        for (std::size_t k = 0; k < grid.size(); ++k) CHECK(a.cdf_values[k] == doctest::Approx(b.cdf_values[k]));
    }
    SUBCASE("model without a union effect ignores the probability") {
        auto flat = *model;
        flat.coefficients.col(1).setZero();
        const auto a = union_reweighted_cdf(flat, 0, [](std::span<const double>) { return 0.9; }, s);
        const auto b = marginal_cdf(flat, s).distribution;
        for (std::size_t k = 0; k < grid.size(); ++k) CHECK(a.cdf_values[k] == doctest::Approx(b.cdf_values[k]));
    }
    SUBCASE("Monte Carlo: redraw union status and take the plain marginal") {
        const auto big = unionised(10000, 9, 0.3, 0.0, 0.4);
        const auto p = [](std::span<const double> x) { return oracle::logistic(-1.0 + 1.5 * x[1]); };
        const auto a = union_reweighted_cdf(*model, 0, p, big);
        std::mt19937_64 rng(10);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        Eigen::MatrixXd x = big.covariates();
        for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = u01(rng) < p(std::vector<double>{0.0, x(i, 1)}) ? 1.0 : 0.0;
        const GroupSample redrawn(big.outcome(), x, big.weights());
        const auto b = marginal_cdf(*model, redrawn).distribution;
        for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(a.cdf_values[k] - b.cdf_values[k]) < 0.01);
    }
    SUBCASE("fitted union model matches the Newton oracle") {
        const auto base = synth::wages(600, 11, 0.3, 0.0);
        const auto u = fit_union_model(base, 0, {1, 2});
        oracle::Matrix z;
        std::vector<double> d, w;
        for (Eigen::Index i = 0; i < base.outcome().size(); ++i) {
            z.push_back({1.0, base.covariates()(i, 1), base.covariates()(i, 2)});
            d.push_back(base.covariates()(i, 0));
            w.push_back(base.weights()[i]);
        }
        const auto beta = oracle::logit_newton(z, d, w);
        for (std::size_t j = 0; j < beta.size(); ++j)
            CHECK(u.beta[static_cast<Eigen::Index>(j)] == doctest::Approx(beta[j]).epsilon(1e-7));
        CHECK_THROWS_AS(fit_union_model(base, 0, {0, 1}), ConfigError);
        CHECK_THROWS_AS(fit_union_model(base, 1, {2}), DataError);
    }
    SUBCASE("no union members") {
        auto x = s.covariates();
        x.col(0).setZero();
        const auto u = fit_union_model(GroupSample(s.outcome(), x, s.weights()), 0, {1});
        CHECK(u.status == GridPointStatus::degenerate_zero);
        CHECK(u.probability(std::vector<double>{0.0, 0.5}) == 0.0);
    }
}

TEST_CASE("decomposition telescopes") {
    const auto data = synth::wage_panel(700, 21);
    const auto grid = linspace(0.2, 3.4, 60);
    for (auto order : {DecompositionOrder::forward, DecompositionOrder::reverse}) {
        for (auto kind : {ConditionalEstimator::distribution_regression, ConditionalEstimator::quantile_regression}) {
            auto config = base_config(grid, grid[22], grid[25]);
            config.order = order;
            config.estimator.kind = kind;
            if (kind == ConditionalEstimator::quantile_regression) {
                // Quantile-derived CDFs are exactly 0 below the lowest fitted quantile.
                config.policy.strategy = MinimumWageStrategy::censoring;
            }
            const auto result = decompose(data, config);
            REQUIRE(result.chain.size() == 5);
            REQUIRE(result.reports.size() == config.functionals.size());
            for (const auto& r : result.reports) {
                REQUIRE(r.components.size() == 4);
                for (std::size_t t = 0; t < r.total.values.size(); ++t) {
                    double sum = 0.0;
                    for (const auto& c : r.components) sum += c.curve.values[t];
                    CHECK(std::abs(sum - r.total.values[t]) < 1e-12);
                }
            }
            const auto mean_total = result.reports[2].total.values[0];
            if (order == DecompositionOrder::forward) {
                CHECK(result.reports[0].components.front().name == "minimum_wage");
                CHECK(mean_total == doctest::Approx(mean(result.chain.front()) - mean(result.chain.back())));
            } else {
                CHECK(result.reports[0].components.front().name == "price");
                CHECK(result.chain_labels[1] == "Y0,m1,U1,Z1");
            }
        }
    }
}

TEST_CASE("decomposition of two identical samples") {
    const auto s = synth::wages(800, 31, 0.3, 0.0);
    const GroupedDataset data(s, s, {"union", "educ", "exper"});
    const auto grid = linspace(0.4, 3.0, 50);
    auto config = base_config(grid, grid[8], grid[8]);
    config.functionals = {Functional::quantile};
    const auto result = decompose(data, config);
    const auto& r = result.reports[0];
    CHECK(max_abs(r.total.values) == 0.0);
    CHECK(max_abs(r.components[0].curve.values) < 1e-10);
    CHECK(max_abs(r.components[3].curve.values) < 1e-10);
    // Fitted union probabilities differ from realised status only through sampling noise.
    CHECK(max_abs(r.components[1].curve.values) < 0.05);
    CHECK(max_abs(r.components[2].curve.values) < 0.05);
}

TEST_CASE("composition-only change is attributed to composition") {
    const GroupedDataset data(unionised(3000, 41, 0.25, 0.0, 0.3), unionised(3000, 42, 0.25, 0.4, 0.3),
                              {"union", "x"});
    auto config = base_config(linspace(-0.5, 4.5, 101), 0.5, 0.5);
    config.estimator.link = Link::probit;
    config.functionals = {Functional::quantile, Functional::mean};
    const auto result = decompose(data, config);
    const auto& q = result.reports[0];
    for (std::size_t t = 0; t < q.total.values.size(); ++t) {
        CHECK(q.components[2].curve.values[t] == doctest::Approx(q.total.values[t]).epsilon(0.5));
        CHECK(std::abs(q.components[3].curve.values[t]) < 0.1);
        CHECK(std::abs(q.components[0].curve.values[t]) < 0.1);
    }
    CHECK(result.reports[1].components[2].curve.values[0] == doctest::Approx(0.4).epsilon(0.25));
}

TEST_CASE("decomposition configuration errors") {
    const auto data = synth::wage_panel(300, 51);
    auto config = base_config(linspace(0.2, 3.4, 30), 1.0, 1.0);
    config.functionals.clear();
    CHECK_THROWS_AS(decompose(data, config), ConfigError);
    config = base_config(linspace(0.2, 3.4, 30), 1.0, 1.0);
    config.union_column = "educ";
    CHECK_THROWS_AS(decompose(data, config), DataError);
    config.union_column = "missing";
    CHECK_THROWS(decompose(data, config));
    CHECK(parse_estimator("duration_dr") == ConditionalEstimator::duration_dr);
    CHECK_THROWS_AS(parse_estimator("ols"), ConfigError);
}

TEST_CASE("bands on decomposition components") {
    const auto data = synth::wage_panel(250, 61);
    auto config = base_config(linspace(0.2, 3.4, 25), 1.4, 1.5);
    config.functionals = {Functional::mean};
    auto result = decompose(data, config);
    BootstrapPlan plan;
    plan.replications = 30;
    plan.master_seed = 4;
    const auto draws = attach_bands(result, data, config, plan, 0.9);
    CHECK(draws.draws.cols() == 5);
    const auto& r = result.reports[0];
    REQUIRE(r.total_band);
    CHECK(r.total_band->lower.values[0] <= r.total.values[0]);
    for (const auto& c : r.components) {
        REQUIRE(c.band);
        CHECK(c.band->upper.values[0] >= c.curve.values[0]);
    }
}

TEST_CASE("variance channels") {
    SUBCASE("brute-force mixture variance") {
        ConditionalQuantileModel m;
        m.u_grid = {0.2, 0.5, 0.8};
        m.covariate_names = {"x"};
        m.coefficients.resize(3, 2);
        m.coefficients << -1.0, 0.5, 0.0, 1.0, 2.0, 1.2;
        const GroupSample s(Eigen::VectorXd::Zero(4), (Eigen::MatrixXd(4, 1) << 0.0, 1.0, 2.0, 5.0).finished(),
                            (Eigen::VectorXd(4) << 1, 2, 3, 4).finished());
        const auto cells = u_cell_weights(m.u_grid);
        double m1 = 0.0;
        double m2 = 0.0;
        for (Eigen::Index i = 0; i < 4; ++i) {
            for (Eigen::Index k = 0; k < 3; ++k) {
                const double v = m.coefficients(k, 0) + m.coefficients(k, 1) * s.covariates()(i, 0);
                const double p = s.weights()[i] * cells[static_cast<std::size_t>(k)];
                m1 += p * v;
                m2 += p * v * v;
            }
        }
        const auto ch = variance_channels(m, s);
        CHECK(ch.between + ch.within == doctest::Approx(m2 - m1 * m1).epsilon(1e-12));
    }
    SUBCASE("pure location shift has no within channel from x") {
        ConditionalQuantileModel m;
        m.u_grid = {0.25, 0.75};
        m.covariate_names = {"x"};
        m.coefficients.resize(2, 2);
        m.coefficients << 1.0, 2.0, 1.0, 2.0;
        const GroupSample s(Eigen::VectorXd::Zero(3), (Eigen::MatrixXd(3, 1) << 0.0, 1.0, 2.0).finished(),
                            Eigen::VectorXd::Ones(3));
        const auto ch = variance_channels(m, s);
        CHECK(ch.within == doctest::Approx(0.0));
        CHECK(ch.between == doctest::Approx(4.0 * 2.0 / 3.0));
    }
    SUBCASE("fitted model reproduces the sample variance") {
        const auto s = synth::location_scale({1, 2, 0.5, 1}, 5000, 71);
        const auto m = fit_quantile_regression(s, default_u_grid(0.005, 0.995, 0.005));
        const auto ch = variance_channels(m, s);
        const auto& y = s.outcome();
        const double var = (y.array() - y.mean()).square().mean();
        CHECK(ch.between + ch.within == doctest::Approx(var).epsilon(0.05));
        CHECK_THROWS_AS(variance_channels(fit_location_model(s, m.u_grid), s), ConfigError);
    }
}

TEST_CASE("Gaussian smoothing") {
    FunctionalCurve c{default_u_grid(0.02, 0.98, 0.01), {}, "quantile:union"};
    for (double u : c.grid) c.values.push_back(3.0);
    const auto flat = gaussian_smooth(c);
    for (double v : flat.values) CHECK(v == doctest::Approx(3.0));
    CHECK(flat.label == "quantile:union:smoothed");

    c.values.clear();
    for (double u : c.grid) c.values.push_back(2.0 * u);
    const auto line = gaussian_smooth(c, 0.02);
    for (std::size_t t = 10; t + 10 < c.grid.size(); ++t) CHECK(line.values[t] == doctest::Approx(c.values[t]));
    CHECK_THROWS_AS(gaussian_smooth(c, 0.0), ConfigError);
}
