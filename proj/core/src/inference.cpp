#include "cfdist/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "cfdist/error.hpp"
#include "cfdist/parallel.hpp"

namespace cfdist {

namespace {

// 2 * Phi^{-1}(0.75): interquartile range of a standard normal.
constexpr double kNormalIqr = 1.3489795003921634;

std::mt19937_64 stream_for(std::uint64_t seed, std::size_t replication, std::uint32_t stream) {
    const auto rep = static_cast<std::uint64_t>(replication);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32), stream,
                      0x63666431u};
    return std::mt19937_64(seq);
}

// Type-7 sample quantile of sorted data.
double interpolated_quantile(const std::vector<double>& sorted, double prob) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Left-inverse empirical quantile: smallest value whose empirical CDF reaches prob.
double order_statistic(std::vector<double> values, double prob) {
    std::sort(values.begin(), values.end());
    const double rank = std::ceil(prob * static_cast<double>(values.size()) - 1e-9);
    const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
    return values[idx];
}

void check_draws(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws) {
    if (static_cast<std::size_t>(draws.cols()) != estimate.values.size()) {
        throw ConfigError("bootstrap draws have " + std::to_string(draws.cols()) + " columns, curve has " +
                          std::to_string(estimate.values.size()) + " points");
    }
    if (draws.rows() < 1) {
        throw ConfigError("no bootstrap draws");
    }
}

// Studentized deviations |draw_b(t) - estimate(t)| * scale / s(t), transformed by `fold`.
bool all_zero(const std::vector<double>& s) {
    return std::all_of(s.begin(), s.end(), [](double v) { return v == 0.0; });
}

template <class Fold>
std::vector<double> sup_statistics(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws,
                                   const std::vector<double>& s, double deviation_scale, bool demean, Fold fold) {
    const auto rows = static_cast<std::size_t>(draws.rows());
    const std::size_t len = estimate.values.size();
    std::vector<double> sups(rows, 0.0);
    std::vector<double> dev(len);
    for (std::size_t b = 0; b < rows; ++b) {
        double avg = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            dev[t] = deviation_scale * (draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) -
                                        estimate.values[t]);
            avg += dev[t];
        }
        avg /= static_cast<double>(len);
        double sup = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            sup = std::max(sup, fold(demean ? dev[t] - avg : dev[t]) / s[t]);
        }
        sups[b] = sup;
    }
    return sups;
}

} // namespace

void BootstrapPlan::validate(std::size_t n) const {
    if (replications < 1) {
        throw ConfigError("bootstrap needs at least one replication");
    }
    if (n < 2) {
        throw ConfigError("bootstrap needs at least two observations per group");
    }
    if (scheme == WeightScheme::k_of_n || scheme == WeightScheme::subsample) {
        if (k < 1 || k >= n) {
            throw ConfigError("resample size k = " + std::to_string(k) + " must satisfy 1 <= k < n = " +
                              std::to_string(n));
        }
    }
}

double BootstrapPlan::deviation_scale(std::size_t n) const {
    const auto nd = static_cast<double>(n);
    const auto kd = static_cast<double>(k);
    switch (scheme) {
    case WeightScheme::k_of_n:
        return std::sqrt(kd / nd);
    case WeightScheme::subsample:
        return std::sqrt(kd / (nd - kd));
    default:
        return 1.0;
    }
}

std::vector<double> gen_weights(const BootstrapPlan& plan, std::size_t n, std::size_t replication,
                                std::uint32_t stream) {
    plan.validate(n);
    if (replication >= plan.replications) {
        throw ConfigError("replication index " + std::to_string(replication) + " outside plan of " +
                          std::to_string(plan.replications));
    }
    auto rng = stream_for(plan.master_seed, replication, stream);
    std::vector<double> e(n, 0.0);
    switch (plan.scheme) {
    case WeightScheme::multinomial: {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            e[pick(rng)] += 1.0;
        }
        break;
    }
    case WeightScheme::bayesian: {
        std::exponential_distribution<double> draw(1.0);
        double total = 0.0;
        for (auto& v : e) {
            v = draw(rng);
            total += v;
        }
        const double avg = total / static_cast<double>(n);
        for (auto& v : e) {
            v /= avg;
        }
        break;
    }
    case WeightScheme::wild:
        if (plan.wild_law == WildLaw::exponential) {
            std::exponential_distribution<double> draw(1.0);
            for (auto& v : e) {
                v = draw(rng);
            }
        } else {
            std::poisson_distribution<int> draw(1.0);
            for (auto& v : e) {
                v = static_cast<double>(draw(rng));
            }
        }
        break;
    case WeightScheme::k_of_n: {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t i = 0; i < plan.k; ++i) {
            e[pick(rng)] += 1.0;
        }
        const double factor = std::sqrt(static_cast<double>(n) / static_cast<double>(plan.k));
        for (auto& v : e) {
            v *= factor;
        }
        break;
    }
    case WeightScheme::subsample: {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::vector<std::size_t> chosen;
        chosen.reserve(plan.k);
        std::sample(all.begin(), all.end(), std::back_inserter(chosen), plan.k, rng);
        const double value = static_cast<double>(n) /
                             std::sqrt(static_cast<double>(n - plan.k) * static_cast<double>(plan.k));
        for (std::size_t i : chosen) {
            e[i] = value;
        }
        break;
    }
    case WeightScheme::unit:
        std::fill(e.begin(), e.end(), 1.0);
        break;
    }
    return e;
}

BootstrapDraws bootstrap_curves(const GroupedDataset& dataset, const CurveStatistic& statistic,
                                const BootstrapPlan& plan, unsigned threads) {
    const std::size_t n0 = dataset.group(0).size();
    const std::size_t n1 = dataset.group(1).size();
    plan.validate(n0);
    plan.validate(n1);

    const std::size_t count = plan.replications;
    std::vector<std::vector<double>> rows(count);
    std::vector<std::string> errors(count);
    parallel_for(count, threads, [&](std::size_t b) {
        try {
            const auto e0 = gen_weights(plan, n0, b, 0);
            const auto e1 = gen_weights(plan, n1, b, 1);
            rows[b] = statistic(dataset.reweighted(e0, e1));
            if (rows[b].empty()) {
                errors[b] = "statistic returned an empty curve";
            }
        } catch (const Error& ex) {
            errors[b] = ex.what();
            rows[b].clear();
        }
    });

    BootstrapDraws out;
    out.deviation_scale = plan.deviation_scale(n0);
    std::size_t width = 0;
    for (std::size_t b = 0; b < count; ++b) {
        if (errors[b].empty()) {
            if (width == 0) {
                width = rows[b].size();
            } else if (rows[b].size() != width) {
                throw NumericalError("bootstrap statistic changed length across replications");
            }
            out.replications.push_back(b);
        } else {
            out.failed.push_back(b);
            out.failure_messages.push_back(errors[b]);
        }
    }
    if (static_cast<double>(out.failed.size()) > 0.1 * static_cast<double>(count) || out.replications.empty()) {
        throw NumericalError(std::to_string(out.failed.size()) + " of " + std::to_string(count) +
                             " bootstrap replications failed" +
                             (out.failure_messages.empty() ? "" : ": " + out.failure_messages.front()));
    }
    out.draws.resize(static_cast<Eigen::Index>(out.replications.size()), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < out.replications.size(); ++r) {
        const auto& row = rows[out.replications[r]];
        for (std::size_t t = 0; t < width; ++t) {
            out.draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = row[t];
        }
    }
    return out;
}

std::vector<double> robust_scale(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws,
                                 double deviation_scale) {
    check_draws(estimate, draws);
    const std::size_t len = estimate.values.size();
    const auto rows = static_cast<std::size_t>(draws.rows());
    std::vector<double> s(len);
    double reference = 0.0;
    std::vector<double> column(rows);
    for (std::size_t t = 0; t < len; ++t) {
        reference = std::max(reference, std::abs(estimate.values[t]));
        for (std::size_t b = 0; b < rows; ++b) {
            column[b] = deviation_scale * draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t));
            reference = std::max(reference, std::abs(column[b] / deviation_scale - estimate.values[t]));
        }
        double rms = 0.0;
        for (std::size_t b = 0; b < rows; ++b) {
            const double d = column[b] - deviation_scale * estimate.values[t];
            rms += d * d;
        }
        rms = std::sqrt(rms / static_cast<double>(rows));
        std::sort(column.begin(), column.end());
        s[t] = (interpolated_quantile(column, 0.75) - interpolated_quantile(column, 0.25)) / kNormalIqr;
        // Step-valued statistics often have most draws tied; the IQR is then
        // zero although some draws move.
        if (!(s[t] > 0.0)) {
            s[t] = rms;
        }
    }
    const double floor = std::numeric_limits<double>::epsilon() * reference;
    for (auto& v : s) {
        v = std::max(v, floor);
    }
    return s;
}

UniformBand uniform_band(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws, double level,
                         double deviation_scale) {
    if (!(level > 0.5 && level < 1.0)) {
        throw ConfigError("band level must lie in (0.5, 1)");
    }
    check_draws(estimate, draws);
    if (draws.rows() < 20) {
        throw ConfigError("uniform bands need at least 20 bootstrap replications, got " +
                          std::to_string(draws.rows()));
    }
    const auto s = robust_scale(estimate, draws, deviation_scale);

    UniformBand band;
    band.level = level;
    if (!all_zero(s)) {
        const auto sups =
            sup_statistics(estimate, draws, s, deviation_scale, false, [](double d) { return std::abs(d); });
        band.critical_value = order_statistic(sups, level);
    }
    band.estimate = estimate;
    band.lower = {estimate.grid, {}, estimate.label + ":lower"};
    band.upper = {estimate.grid, {}, estimate.label + ":upper"};
    band.pointwise_se = {estimate.grid, s, estimate.label + ":se"};
    for (std::size_t t = 0; t < estimate.values.size(); ++t) {
        const double half = band.critical_value * s[t];
        band.lower.values.push_back(estimate.values[t] - half);
        band.upper.values.push_back(estimate.values[t] + half);
    }
    return band;
}

std::vector<double> pointwise_critical_values(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws,
                                              double level, double deviation_scale) {
    const auto s = robust_scale(estimate, draws, deviation_scale);
    std::vector<double> out;
    if (all_zero(s)) {
        return std::vector<double>(s.size(), 0.0);
    }
    std::vector<double> column(static_cast<std::size_t>(draws.rows()));
    for (std::size_t t = 0; t < estimate.values.size(); ++t) {
        for (std::size_t b = 0; b < column.size(); ++b) {
            column[b] = std::abs(deviation_scale *
                                 (draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) -
                                  estimate.values[t])) /
                        s[t];
        }
        out.push_back(order_statistic(column, level));
    }
    return out;
}

KsTestReport ks_test(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws, KsNull null,
                     double deviation_scale) {
    check_draws(estimate, draws);
    const auto s = robust_scale(estimate, draws, deviation_scale);
    const std::size_t len = estimate.values.size();

    KsTestReport report;
    report.null = null;
    report.replications = static_cast<std::size_t>(draws.rows());
    if (all_zero(s)) {
        return report;
    }

    std::vector<double> sups;
    double statistic = 0.0;
    switch (null) {
    case KsNull::no_effect:
        for (std::size_t t = 0; t < len; ++t) {
            statistic = std::max(statistic, std::abs(estimate.values[t]) / s[t]);
        }
        sups = sup_statistics(estimate, draws, s, deviation_scale, false, [](double d) { return std::abs(d); });
        break;
    case KsNull::constant_effect: {
        const double avg =
            std::accumulate(estimate.values.begin(), estimate.values.end(), 0.0) / static_cast<double>(len);
        for (std::size_t t = 0; t < len; ++t) {
            statistic = std::max(statistic, std::abs(estimate.values[t] - avg) / s[t]);
        }
        sups = sup_statistics(estimate, draws, s, deviation_scale, true, [](double d) { return std::abs(d); });
        break;
    }
    case KsNull::positive_effect:
        for (std::size_t t = 0; t < len; ++t) {
            statistic = std::max(statistic, std::max(-estimate.values[t], 0.0) / s[t]);
        }
        sups = sup_statistics(estimate, draws, s, deviation_scale, false,
                              [](double d) { return std::max(-d, 0.0); });
        break;
    }
    report.statistic = statistic;
    const auto exceed = std::count_if(sups.begin(), sups.end(), [&](double v) { return v >= statistic; });
    report.p_value = static_cast<double>(exceed) / static_cast<double>(sups.size());
    return report;
}

std::string to_string(WeightScheme scheme) {
    switch (scheme) {
    case WeightScheme::multinomial:
        return "multinomial";
    case WeightScheme::bayesian:
        return "bayesian";
    case WeightScheme::wild:
        return "wild";
    case WeightScheme::k_of_n:
        return "k_of_n";
    case WeightScheme::subsample:
        return "subsample";
    case WeightScheme::unit:
        return "unit";
    }
    return "unknown";
}

WeightScheme parse_weight_scheme(const std::string& name) {
    for (auto s : {WeightScheme::multinomial, WeightScheme::bayesian, WeightScheme::wild, WeightScheme::k_of_n,
                   WeightScheme::subsample, WeightScheme::unit}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ConfigError("unknown bootstrap scheme '" + name + "'");
}

std::string to_string(KsNull null) {
    switch (null) {
    case KsNull::no_effect:
        return "no_effect";
    case KsNull::constant_effect:
        return "constant_effect";
    case KsNull::positive_effect:
        return "positive_effect";
    }
    return "unknown";
}

KsNull parse_ks_null(const std::string& name) {
    for (auto n : {KsNull::no_effect, KsNull::constant_effect, KsNull::positive_effect}) {
        if (to_string(n) == name) {
            return n;
        }
    }
    throw ConfigError("unknown KS null '" + name + "'");
}

} // namespace cfdist
