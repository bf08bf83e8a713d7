#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include <cfdist/data.hpp>

#include "oracles.hpp"

namespace synth {

// y = b0 + b1 x + (g0 + g1 x) e, x ~ U(lo, hi), e ~ N(0,1).
struct LocationScale {
    double b0 = 1.0, b1 = 1.0, g0 = 1.0, g1 = 0.0;
    double lo = 0.0, hi = 1.0;
};

inline cfdist::GroupSample location_scale(const LocationScale& d, std::size_t n, std::uint64_t seed,
                                          bool random_weights = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(d.lo, d.hi);
    std::uniform_real_distribution<double> uw(0.5, 2.0);
    std::normal_distribution<double> e;
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
    Eigen::VectorXd w(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        x(i, 0) = ux(rng);
        y[i] = d.b0 + d.b1 * x(i, 0) + (d.g0 + d.g1 * x(i, 0)) * e(rng);
        w[i] = random_weights ? uw(rng) : 1.0;
    }
    return {y, x, w};
}

// Random design with an intercept column followed by p - 1 standard normals.
inline oracle::Matrix random_design(std::mt19937_64& rng, std::size_t n, std::size_t p) {
    std::normal_distribution<double> e;
    oracle::Matrix z(n, std::vector<double>(p, 1.0));
    for (auto& row : z) {
        for (std::size_t j = 1; j < p; ++j) row[j] = e(rng);
    }
    return z;
}

inline cfdist::GroupSample to_sample(const oracle::Matrix& z, const std::vector<double>& y,
                                     const std::vector<double>& w) {
    const auto n = static_cast<Eigen::Index>(y.size());
    const auto p = static_cast<Eigen::Index>(z[0].size());
    Eigen::MatrixXd x(n, p - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 1; j < p; ++j) x(i, j - 1) = z[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return {Eigen::Map<const Eigen::VectorXd>(y.data(), n), x, Eigen::Map<const Eigen::VectorXd>(w.data(), n)};
}

// Weighted wage-like sample: covariates (union, educ, exper) and a log wage.
inline cfdist::GroupSample wages(std::size_t n, std::uint64_t seed, double union_share, double shift,
                                 double union_premium = 0.15) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> educ(8, 18);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> e;
    const auto m = static_cast<Eigen::Index>(n);
    Eigen::VectorXd y(m);
    Eigen::MatrixXd x(m, 3);
    Eigen::VectorXd w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double ed = educ(rng);
        const double ex = 30.0 * u01(rng);
        const double un = u01(rng) < union_share + 0.01 * (ed - 12.0) ? 1.0 : 0.0;
        x(i, 0) = un;
        x(i, 1) = ed;
        x(i, 2) = ex;
        y[i] = 1.0 + 0.06 * ed + 0.01 * ex + union_premium * un + shift + (0.4 - 0.1 * un) * e(rng);
        w[i] = 0.5 + 1.5 * u01(rng);
    }
    return {y, x, w};
}

inline cfdist::GroupedDataset wage_panel(std::size_t n, std::uint64_t seed) {
    return {wages(n, seed, 0.30, 0.0), wages(n, seed + 1, 0.18, 0.05, 0.2), {"union", "educ", "exper"},
            {"1979", "1988"}};
}

} // namespace synth
