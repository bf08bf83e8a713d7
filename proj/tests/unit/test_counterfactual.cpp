#include <doctest.h>

#include <random>

#include <cfdist/counterfactual.hpp>
#include <cfdist/error.hpp>

#include "support/synth.hpp"

using namespace cfdist;

namespace {

StepDistribution atoms(std::vector<double> values, std::vector<double> probs) {
    StepDistribution d{std::move(values), {}};
    double c = 0.0;
    for (double p : probs) d.cdf_values.push_back(c += p);
    return d;
}

GroupSample constant_covariate(std::size_t n, double x) {
    const auto m = static_cast<Eigen::Index>(n);
    return {Eigen::VectorXd::LinSpaced(m, 0.0, 1.0), Eigen::MatrixXd::Constant(m, 1, x), Eigen::VectorXd::Ones(m)};
}

} // namespace

TEST_CASE("quantile left inverse") {
    const auto d = atoms({1, 2}, {0.5, 0.5});
    CHECK(quantile(d, 0.5) == 1);
    CHECK(quantile(d, 0.75) == 2);
    CHECK(quantile(d, 0.5001) == 2);
    bool underflow = false;
    const auto short_mass = atoms({1, 2}, {0.3, 0.3});
    CHECK(quantile(short_mass, 0.9, &underflow) == 2);
    CHECK(underflow);
    CHECK_THROWS_AS(quantile(d, 0.0), DomainError);
    CHECK_THROWS_AS(quantile(d, 1.0), DomainError);
}

TEST_CASE("Lorenz, Gini and moments on small atom sets") {
    const auto two = atoms({1, 3}, {0.5, 0.5});
    CHECK(lorenz(two, 1.0) == doctest::Approx(0.25));
    CHECK(lorenz(two, 3.0) == doctest::Approx(1.0));
    CHECK(gini(two) == doctest::Approx(oracle::pairwise_gini({1, 3}, {0.5, 0.5})).epsilon(1e-14));
    CHECK(gini(two) == doctest::Approx(0.25));

    const auto point = atoms({0, 5, 7}, {0, 1, 0});
    CHECK(gini(point) == doctest::Approx(0.0));
    CHECK(lorenz(point, 5.0) == 1.0);
    CHECK(mean(point) == 5.0);
    CHECK(variance(point) == 0.0);

    const auto coin = atoms({0, 1}, {0.5, 0.5});
    CHECK(mean(coin) == 0.5);
    CHECK(variance(coin) == 0.25);

    CHECK_THROWS_AS(gini(atoms({-1, 2}, {0.5, 0.5})), DomainError);
    CHECK_THROWS_AS(lorenz(atoms({0, 1}, {1.0, 0.0}), 1.0), DomainError);
}

TEST_CASE("Gini agrees with the pairwise oracle on random atoms") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> v(12), p(12);
        double c = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            c += 0.1 + u(rng);
            v[k] = c;
            p[k] = u(rng);
        }
        const double total = std::accumulate(p.begin(), p.end(), 0.0);
        for (double& x : p) x /= total;
        const auto d = atoms(v, p);
        CHECK(gini(d) == doctest::Approx(oracle::pairwise_gini(v, p)).epsilon(1e-12));
        CHECK(gini(d) >= 0.0);
        CHECK(gini(d) <= 1.0);

        const auto curve = lorenz_curve(d, default_u_grid(0.01, 0.99, 0.01));
        for (std::size_t t = 2; t < curve.values.size(); ++t) {
            CHECK(curve.values[t] - 2 * curve.values[t - 1] + curve.values[t - 2] >= -1e-12);
        }
    }
}

TEST_CASE("moments of a sample distribution match direct weighted moments") {
    const auto s = synth::location_scale({1, 2, 0.5, 1}, 300, 4, true);
    std::vector<std::pair<double, double>> obs;
    for (Eigen::Index i = 0; i < s.outcome().size(); ++i) obs.emplace_back(s.outcome()[i], s.weights()[i]);
    std::sort(obs.begin(), obs.end());
    StepDistribution d;
    double c = 0.0;
    double m1 = 0.0;
    double m2 = 0.0;
    for (const auto& [y, w] : obs) {
        d.y_grid.push_back(y);
        d.cdf_values.push_back(c += w);
        m1 += w * y;
    }
    for (const auto& [y, w] : obs) m2 += w * (y - m1) * (y - m1);
    d.cdf_values.back() = 1.0;
    CHECK(std::abs(mean(d) - m1) < 1e-10);
    CHECK(std::abs(variance(d) - m2) < 1e-10);
}

TEST_CASE("marginal CDF") {
    const auto s = synth::location_scale({0, 1, 1, 0}, 200, 2);
    std::vector<double> grid;
    for (int k = -20; k <= 30; ++k) grid.push_back(0.1 * k);
    const auto model = rearrange(fit_distribution_regression(s, grid));

    SUBCASE("point-mass covariates give the conditional CDF") {
        const auto m = marginal_cdf(model, constant_covariate(7, 0.4));
        const auto row = model.cdf_row(std::vector<double>{0.4});
        for (std::size_t k = 0; k < grid.size(); ++k) CHECK(m.distribution.cdf_values[k] == doctest::Approx(row[k]));
    }
    SUBCASE("x-independent model ignores the covariate group") {
        auto flat = model;
        flat.coefficients.col(1).setZero();
        const auto a = marginal_cdf(flat, s).distribution;
        const auto b = marginal_cdf(flat, constant_covariate(5, 100.0)).distribution;
        for (std::size_t k = 0; k < grid.size(); ++k) CHECK(a.cdf_values[k] == doctest::Approx(b.cdf_values[k]));
    }
    SUBCASE("extrapolation is counted") {
        const auto m = marginal_cdf(model, constant_covariate(4, 9.0));
        CHECK(m.extrapolated == 4);
        CHECK(m.extrapolated_share == 1.0);
    }
    SUBCASE("transform dimension mismatch") {
        CHECK_THROWS_AS(marginal_cdf(model, s, affine_transform({1, 1}, {0, 0})), ConfigError);
    }
    SUBCASE("monotone, in [0,1], and Galois connection with the quantile") {
        const auto d = marginal_cdf(model, s, affine_transform({1.5}, {0.2})).distribution;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            CHECK(d.cdf_values[k] >= 0.0);
            CHECK(d.cdf_values[k] <= 1.0);
            if (k > 0) CHECK(d.cdf_values[k] >= d.cdf_values[k - 1]);
            if (d.cdf_values[k] > 0.0 && d.cdf_values[k] < 1.0) CHECK(quantile(d, d.cdf_values[k]) <= grid[k]);
        }
    }
}

TEST_CASE("saturated distribution regression reproduces the weighted empirical CDF") {
    // Discrete covariate with one indicator per level: the DR model is saturated.
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> level(0, 2);
    std::normal_distribution<double> e;
    std::uniform_real_distribution<double> uw(0.5, 2.0);
    const Eigen::Index n = 600;
    Eigen::VectorXd y(n), w(n);
    Eigen::MatrixXd x(n, 2);
    std::vector<double> yv(n), wv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int l = level(rng);
        x(i, 0) = l == 1;
        x(i, 1) = l == 2;
        y[i] = l + e(rng);
        w[i] = uw(rng);
    }
    const GroupSample s(y, x, w);
    for (Eigen::Index i = 0; i < n; ++i) {
        yv[static_cast<std::size_t>(i)] = y[i];
        wv[static_cast<std::size_t>(i)] = s.weights()[i];
    }
    std::vector<double> grid;
    for (int k = 0; k <= 10; ++k) grid.push_back(-0.5 + 0.3 * k);
    const auto d = marginal_cdf(fit_distribution_regression(s, grid), s).distribution;
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(d.cdf_values[k] - oracle::ecdf(yv, wv, grid[k])) < 1e-6);
}

TEST_CASE("effects") {
    const auto a = atoms({1, 2, 3, 4}, {0.25, 0.25, 0.25, 0.25});
    const auto grid = std::vector<double>{0.1, 0.3, 0.6, 0.9};
    for (double v : quantile_effect(a, a, grid).values) CHECK(v == 0.0);
    for (double v : distribution_effect(a, a, a.y_grid).values) CHECK(v == 0.0);

    auto shifted = a;
    for (double& y : shifted.y_grid) y += 1.5;
    for (double v : quantile_effect(a, shifted, grid).values) CHECK(v == doctest::Approx(1.5));

    // Two normals on a fine grid: QE matches the analytic quantile difference.
    StepDistribution n0, n1;
    for (int k = -4000; k <= 6000; ++k) {
        const double y = 0.001 * k;
        n0.y_grid.push_back(y);
        n1.y_grid.push_back(y);
        n0.cdf_values.push_back(oracle::normal_cdf(y));
        n1.cdf_values.push_back(oracle::normal_cdf((y - 1.0) / 1.5));
    }
    const auto qe = quantile_effect(n0, n1, grid);
    for (std::size_t t = 0; t < grid.size(); ++t) {
        const double z = oracle::bisect([&](double v) { return oracle::normal_cdf(v) - grid[t]; }, -10, 10);
        CHECK(std::abs(qe.values[t] - (1.0 + 0.5 * z)) <= 0.0011);
    }
}

TEST_CASE("effect distribution") {
    const auto s = synth::location_scale({1, 2, 0.5, 1}, 200, 12);
    const auto grid = default_u_grid(0.05, 0.95, 0.05);
    const auto m0 = fit_quantile_regression(s, grid);

    const auto same = effect_distribution(m0, m0, s).distribution;
    CHECK(same.cdf_at(-1e-9) == 0.0);
    CHECK(same.cdf_at(0.0) == doctest::Approx(1.0));

    auto m1 = m0;
    m1.coefficients.col(0).array() += 0.7;
    std::vector<double> delta;
    for (int k = -100; k <= 200; ++k) delta.push_back(0.01 * k);
    const auto shifted = effect_distribution(m0, m1, s, delta).distribution;
    for (double u : grid) CHECK(quantile(shifted, u) == doctest::Approx(0.7).epsilon(0.011));

    // Covariate transform x -> x + 0.5 on the location-scale DGP: effect is
    // 0.5 * (b1 + g1 * z_u), so its support lies in [0.5*(2 + min z), 0.5*(2 + max z)].
    const auto tr = effect_distribution(m0, affine_transform({1.0}, {0.5}), s);
    CHECK(tr.min_effect <= tr.max_effect);
    CHECK(tr.distribution.total_mass() == doctest::Approx(1.0));
}

TEST_CASE("functionals dispatch") {
    const auto d = atoms({1, 2, 3}, {0.2, 0.3, 0.5});
    EvaluationGrids grids{{0.1, 0.5, 0.9}, {1, 2, 3}};
    CHECK(apply_functional(Functional::quantile, d, grids).values == std::vector<double>{1, 2, 3});
    CHECK(apply_functional(Functional::cdf, d, grids).values == d.cdf_values);
    CHECK(apply_functional(Functional::q90_q10, d, grids).values == std::vector<double>{2});
    CHECK(apply_functional(Functional::mean, d, grids).values.size() == 1);
    CHECK(is_scalar(Functional::gini));
    CHECK(parse_functional("variance") == Functional::variance);
    CHECK_THROWS_AS(parse_functional("median"), ConfigError);
}
