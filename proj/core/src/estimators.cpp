#include "cfdist/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "cfdist/error.hpp"
#include "cfdist/parallel.hpp"

namespace cfdist {

namespace {

std::vector<std::string> names_for(const FitOptions& options, std::size_t p) {
    if (!options.covariate_names.empty()) {
        if (options.covariate_names.size() != p) {
            throw ConfigError("covariate_names has " + std::to_string(options.covariate_names.size()) +
                              " entries for " + std::to_string(p) + " covariates");
        }
        return options.covariate_names;
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < p; ++j) {
        names.push_back("x" + std::to_string(j + 1));
    }
    return names;
}

double design_dot(const Eigen::MatrixXd& coefficients, Eigen::Index row, std::span<const double> x) {
    double index = coefficients(row, 0);
    for (std::size_t j = 0; j < x.size(); ++j) {
        index += coefficients(row, static_cast<Eigen::Index>(j) + 1) * x[j];
    }
    return index;
}

double link_quantile(Link link, double p) {
    if (link == Link::logit) {
        return std::log(p / (1.0 - p));
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

struct IndicatorShares {
    double below = 0.0;
    double above = 0.0;
};

IndicatorShares shares(const Eigen::VectorXd& outcome, const Eigen::VectorXd& weights, double threshold,
                       Eigen::VectorXd& indicator) {
    IndicatorShares s;
    for (Eigen::Index i = 0; i < outcome.size(); ++i) {
        const bool at_or_below = outcome[i] <= threshold;
        indicator[i] = at_or_below ? 1.0 : 0.0;
        (at_or_below ? s.below : s.above) += weights[i];
    }
    return s;
}

void check_dimension(std::span<const double> x, std::size_t dim) {
    if (x.size() != dim) {
        throw DomainError("covariate vector has length " + std::to_string(x.size()) + ", model expects " +
                          std::to_string(dim));
    }
}

} // namespace

SupportBox SupportBox::of(const GroupSample& sample) {
    SupportBox box;
    const auto& x = sample.covariates();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (sample.weights()[i] > 0.0) {
                lo = std::min(lo, x(i, j));
                hi = std::max(hi, x(i, j));
            }
        }
        box.lower.push_back(lo);
        box.upper.push_back(hi);
    }
    return box;
}

bool SupportBox::contains(std::span<const double> x) const {
    if (lower.empty()) {
        return true;
    }
    for (std::size_t j = 0; j < x.size() && j < lower.size(); ++j) {
        if (x[j] < lower[j] || x[j] > upper[j]) {
            return false;
        }
    }
    return true;
}

std::vector<std::string> design_column_names(const std::vector<std::string>& covariate_names, std::size_t p) {
    std::vector<std::string> names{"(intercept)"};
    for (std::size_t j = 0; j < p; ++j) {
        names.push_back(j < covariate_names.size() ? covariate_names[j] : "x" + std::to_string(j + 1));
    }
    return names;
}

void require_full_rank(const Eigen::MatrixXd& design, const Eigen::VectorXd& weights,
                       const std::vector<std::string>& column_names) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    Eigen::MatrixXd scaled(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        scaled.row(i) = std::sqrt(std::max(weights[i], 0.0)) * design.row(i);
    }
    Eigen::MatrixXd basis(n, p);
    Eigen::Index rank = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::VectorXd v = scaled.col(j);
        const double original = v.norm();
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index k = 0; k < rank; ++k) {
                v -= basis.col(k).dot(v) * basis.col(k);
            }
        }
        const double remaining = v.norm();
        if (!(original > 0.0) || remaining <= 1e-10 * original) {
            throw SingularDesignError(static_cast<std::size_t>(j) < column_names.size()
                                          ? column_names[static_cast<std::size_t>(j)]
                                          : "column " + std::to_string(j));
        }
        basis.col(rank++) = v / remaining;
    }
}

std::vector<double> u_cell_weights(std::span<const double> u_grid) {
    validate_grid(u_grid, true, "u_grid");
    const std::size_t m = u_grid.size();
    std::vector<double> cells(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double lo = k == 0 ? 0.0 : 0.5 * (u_grid[k - 1] + u_grid[k]);
        const double hi = k + 1 == m ? 1.0 : 0.5 * (u_grid[k] + u_grid[k + 1]);
        cells[k] = hi - lo;
    }
    return cells;
}

// --- quantile models -------------------------------------------------------

double ConditionalQuantileModel::quantile(std::size_t k, std::span<const double> x) const {
    check_dimension(x, dim());
    return design_dot(coefficients, static_cast<Eigen::Index>(k), x);
}

void ConditionalQuantileModel::quantiles(std::span<const double> x, std::span<double> out) const {
    check_dimension(x, dim());
    for (std::size_t k = 0; k < u_grid.size(); ++k) {
        out[k] = design_dot(coefficients, static_cast<Eigen::Index>(k), x);
    }
}

ConditionalQuantileModel fit_location_model(const GroupSample& sample, std::span<const double> u_grid,
                                            const FitOptions& options) {
    validate_grid(u_grid, true, "u_grid");
    const auto names = names_for(options, sample.dim());
    const Eigen::MatrixXd z = sample.design();
    const Eigen::VectorXd& w = sample.weights();
    require_full_rank(z, w, design_column_names(names, sample.dim()));

    const Eigen::MatrixXd gram = z.transpose() * w.asDiagonal() * z;
    const Eigen::VectorXd moment = z.transpose() * w.asDiagonal() * sample.outcome();
    const Eigen::VectorXd beta = gram.ldlt().solve(moment);

    const Eigen::VectorXd resid = sample.outcome() - z * beta;
    std::vector<std::size_t> order(static_cast<std::size_t>(resid.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return resid[static_cast<Eigen::Index>(a)] < resid[static_cast<Eigen::Index>(b)];
    });

    ConditionalQuantileModel model;
    model.kind = QuantileModelKind::location;
    model.u_grid.assign(u_grid.begin(), u_grid.end());
    model.slope = beta;
    model.covariate_names = names;
    model.support = SupportBox::of(sample);
    model.coefficients.resize(static_cast<Eigen::Index>(u_grid.size()), z.cols());

    // One pass over the sorted residuals serves the whole (sorted) grid; the
    // alpha path is therefore nondecreasing by construction.
    std::size_t pos = 0;
    double cum = 0.0;
    for (std::size_t k = 0; k < u_grid.size(); ++k) {
        const double target = u_grid[k];
        while (pos < order.size()) {
            const auto i = static_cast<Eigen::Index>(order[pos]);
            if (cum >= target * (1.0 - 1e-14) && cum > 0.0 && pos > 0 &&
                resid[static_cast<Eigen::Index>(order[pos - 1])] != resid[i]) {
                break;
            }
            cum += w[i];
            ++pos;
        }
        const double a = resid[static_cast<Eigen::Index>(order[pos - 1])];
        model.alpha.push_back(a);
        model.coefficients.row(static_cast<Eigen::Index>(k)) = beta.transpose();
        model.coefficients(static_cast<Eigen::Index>(k), 0) += a;
    }
    return model;
}

ConditionalQuantileModel fit_quantile_regression(const GroupSample& sample, std::span<const double> u_grid,
                                                 const FitOptions& options) {
    validate_grid(u_grid, true, "u_grid");
    const auto names = names_for(options, sample.dim());
    const Eigen::MatrixXd z = sample.design();
    require_full_rank(z, sample.weights(), design_column_names(names, sample.dim()));

    ConditionalQuantileModel model;
    model.kind = QuantileModelKind::quantile_regression;
    model.u_grid.assign(u_grid.begin(), u_grid.end());
    model.covariate_names = names;
    model.support = SupportBox::of(sample);
    model.coefficients.resize(static_cast<Eigen::Index>(u_grid.size()), z.cols());
    parallel_for(u_grid.size(), options.threads, [&](std::size_t k) {
        const auto fit = solve_quantile_regression(z, sample.outcome(), sample.weights(), u_grid[k],
                                                   options.max_iterations, options.tolerance);
        model.coefficients.row(static_cast<Eigen::Index>(k)) = fit.beta.transpose();
    });
    return model;
}

// --- binary response ------------------------------------------------------

double binary_probability(Link link, GridPointStatus status, double index) {
    switch (status) {
    case GridPointStatus::degenerate_zero:
        return 0.0;
    case GridPointStatus::degenerate_one:
        return 1.0;
    default:
        break;
    }
    const double p = link_cdf(link, std::clamp(index, -kIndexCap, kIndexCap));
    if (status == GridPointStatus::separated || status == GridPointStatus::bracket_failure) {
        return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
    }
    return p;
}

BinaryFit fit_binary_response(const Eigen::MatrixXd& design, const Eigen::VectorXd& indicator,
                              const Eigen::VectorXd& weights, Link link) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    double share = 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        share += weights[i] * indicator[i];
        total += weights[i];
    }
    share /= total;

    BinaryFit fit;
    fit.beta = Eigen::VectorXd::Zero(p);
    fit.beta[0] = link_quantile(link, std::clamp(share, 1e-12, 1.0 - 1e-12));

    auto loglik = [&](const Eigen::VectorXd& eta) {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (weights[i] > 0.0) {
                ll += weights[i] * (indicator[i] > 0.5 ? link_log_cdf(link, eta[i]) : link_log_ccdf(link, eta[i]));
            }
        }
        return ll;
    };

    constexpr int kMaxIterations = 100;
    Eigen::VectorXd eta = design * fit.beta;
    double ll = loglik(eta);
    Eigen::VectorXd score(p);
    Eigen::MatrixXd info(p, p);
    bool converged = false;
    bool diverging = false;
    for (int it = 0; it < kMaxIterations; ++it) {
        score.setZero();
        info.setZero();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(weights[i] > 0.0)) {
                continue;
            }
            const double mu = link_cdf(link, eta[i]);
            const double dens = link_pdf(link, eta[i]);
            const double factor = link_score_factor(link, eta[i]);
            score += weights[i] * (indicator[i] - mu) * factor * design.row(i).transpose();
            // Expected information; equals the observed Hessian for the logit link.
            const double curvature = weights[i] * dens * factor;
            info.selfadjointView<Eigen::Lower>().rankUpdate(design.row(i).transpose(), curvature);
        }
        fit.score_norm = score.norm();
        fit.iterations = it;
        if (fit.score_norm <= 1e-11) {
            converged = true;
            break;
        }
        Eigen::LDLT<Eigen::MatrixXd> solver(info.selfadjointView<Eigen::Lower>());
        Eigen::VectorXd step = solver.solve(score);
        if (!step.allFinite()) {
            diverging = true;
            break;
        }
        double length = 1.0;
        Eigen::VectorXd candidate;
        double candidate_ll = -std::numeric_limits<double>::infinity();
        for (int halving = 0; halving < 40; ++halving) {
            candidate = fit.beta + length * step;
            const Eigen::VectorXd candidate_eta = design * candidate;
            candidate_ll = loglik(candidate_eta);
            if (candidate_ll >= ll - 1e-15 * std::abs(ll)) {
                eta = candidate_eta;
                break;
            }
            length *= 0.5;
        }
        const double improvement = candidate_ll - ll;
        fit.beta = candidate;
        eta = design * fit.beta;
        ll = candidate_ll;
        if (eta.cwiseAbs().maxCoeff() > 2.0 * kIndexCap) {
            diverging = true;
            break;
        }
        if (std::abs(improvement) <= 1e-16 * (1.0 + std::abs(ll)) && length < 1.0) {
            // No further progress possible in floating point.
            converged = fit.score_norm <= 1e-6;
            break;
        }
    }
    fit.iterations += 1;

    double max_index = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (weights[i] > 0.0) {
            max_index = std::max(max_index, std::abs(eta[i]));
        }
    }
    if (diverging || !converged || max_index > kIndexCap) {
        fit.status = GridPointStatus::separated;
        if (max_index > kIndexCap) {
            fit.beta *= kIndexCap / max_index;
        }
    }
    return fit;
}

ConditionalDistributionModel fit_distribution_regression(const GroupSample& sample, std::span<const double> y_grid,
                                                         Link link, const FitOptions& options) {
    validate_grid(y_grid, false, "y_grid");
    const auto names = names_for(options, sample.dim());
    const Eigen::MatrixXd z = sample.design();
    const Eigen::VectorXd& w = sample.weights();
    require_full_rank(z, w, design_column_names(names, sample.dim()));

    ConditionalDistributionModel model;
    model.kind = DistributionModelKind::distribution_regression;
    model.link = link;
    model.y_grid.assign(y_grid.begin(), y_grid.end());
    model.covariate_names = names;
    model.support = SupportBox::of(sample);
    model.coefficients = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(y_grid.size()), z.cols());
    model.status.assign(y_grid.size(), GridPointStatus::ok);

    parallel_for(y_grid.size(), options.threads, [&](std::size_t k) {
        Eigen::VectorXd indicator(z.rows());
        const auto s = shares(sample.outcome(), w, y_grid[k], indicator);
        if (s.below <= 0.0) {
            model.status[k] = GridPointStatus::degenerate_zero;
            model.coefficients(static_cast<Eigen::Index>(k), 0) = -kIndexCap;
            return;
        }
        if (s.above <= 0.0) {
            model.status[k] = GridPointStatus::degenerate_one;
            model.coefficients(static_cast<Eigen::Index>(k), 0) = kIndexCap;
            return;
        }
        const auto fit = fit_binary_response(z, indicator, w, link);
        model.coefficients.row(static_cast<Eigen::Index>(k)) = fit.beta.transpose();
        model.status[k] = fit.status;
    });
    return model;
}

ConditionalDistributionModel fit_duration_dr(const GroupSample& sample, std::span<const double> y_grid, Link link,
                                             double y0, const FitOptions& options) {
    validate_grid(y_grid, false, "y_grid");
    const auto anchor_it = std::find_if(y_grid.begin(), y_grid.end(), [&](double y) {
        return std::abs(y - y0) <= 1e-12 * std::max(1.0, std::abs(y0));
    });
    if (anchor_it == y_grid.end()) {
        throw ConfigError("anchor threshold y0 is not a y_grid point");
    }
    const auto anchor_index = static_cast<std::size_t>(anchor_it - y_grid.begin());
    const auto names = names_for(options, sample.dim());
    const Eigen::MatrixXd z = sample.design();
    const Eigen::VectorXd& w = sample.weights();
    require_full_rank(z, w, design_column_names(names, sample.dim()));

    Eigen::VectorXd indicator(z.rows());
    const auto anchor_shares = shares(sample.outcome(), w, y_grid[anchor_index], indicator);
    if (anchor_shares.below <= 0.0 || anchor_shares.above <= 0.0) {
        throw NumericalError("anchor threshold y0 = " + std::to_string(y0) + " is degenerate");
    }
    const auto anchor_fit = fit_binary_response(z, indicator, w, link);
    if (anchor_fit.status != GridPointStatus::ok) {
        throw NumericalError("binary fit at anchor threshold y0 is separated");
    }
    const Eigen::VectorXd eta = z * anchor_fit.beta;

    ConditionalDistributionModel model;
    model.kind = DistributionModelKind::duration_dr;
    model.link = link;
    model.y_grid.assign(y_grid.begin(), y_grid.end());
    model.covariate_names = names;
    model.support = SupportBox::of(sample);
    model.slope = anchor_fit.beta;
    model.anchor = y_grid[anchor_index];
    model.alpha.assign(y_grid.size(), 0.0);
    model.status.assign(y_grid.size(), GridPointStatus::ok);
    model.coefficients.resize(static_cast<Eigen::Index>(y_grid.size()), z.cols());

    double max_eta = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (w[i] > 0.0) {
            max_eta = std::max(max_eta, std::abs(eta[i]));
        }
    }
    const double bracket = kIndexCap + max_eta;

    parallel_for(y_grid.size(), options.threads, [&](std::size_t k) {
        Eigen::VectorXd d(z.rows());
        const auto s = shares(sample.outcome(), w, y_grid[k], d);
        double a = 0.0;
        if (k == anchor_index) {
            a = 0.0;
        } else if (s.below <= 0.0) {
            model.status[k] = GridPointStatus::degenerate_zero;
            a = -kIndexCap;
        } else if (s.above <= 0.0) {
            model.status[k] = GridPointStatus::degenerate_one;
            a = kIndexCap;
        } else {
            // Score of the alpha block; decreasing in alpha because the
            // log-likelihood is concave.
            auto score = [&](double alpha) {
                double total = 0.0;
                for (Eigen::Index i = 0; i < eta.size(); ++i) {
                    if (w[i] > 0.0) {
                        const double index = alpha + eta[i];
                        total += w[i] * (d[i] - link_cdf(link, index)) * link_score_factor(link, index);
                    }
                }
                return total;
            };
            const double lo_value = score(-bracket);
            const double hi_value = score(bracket);
            if (!(lo_value > 0.0 && hi_value < 0.0)) {
                model.status[k] = GridPointStatus::bracket_failure;
                a = lo_value <= 0.0 ? -bracket : bracket;
            } else {
                std::uintmax_t max_iter = 200;
                const auto root = boost::math::tools::toms748_solve(
                    score, -bracket, bracket, lo_value, hi_value,
                    boost::math::tools::eps_tolerance<double>(50), max_iter);
                a = 0.5 * (root.first + root.second);
            }
        }
        model.alpha[k] = a;
        model.coefficients.row(static_cast<Eigen::Index>(k)) = anchor_fit.beta.transpose();
        model.coefficients(static_cast<Eigen::Index>(k), 0) += a;
    });
    return model;
}

// --- conditional distribution evaluation ---------------------------------

ConditionalDistributionModel qf_to_cdf(std::shared_ptr<const ConditionalQuantileModel> model,
                                       std::span<const double> y_grid) {
    if (!model) {
        throw ConfigError("qf_to_cdf needs a fitted quantile model");
    }
    validate_grid(y_grid, false, "y_grid");
    ConditionalDistributionModel out;
    out.kind = DistributionModelKind::derived_from_quantiles;
    out.y_grid.assign(y_grid.begin(), y_grid.end());
    out.status.assign(y_grid.size(), GridPointStatus::ok);
    out.covariate_names = model->covariate_names;
    out.support = model->support;
    out.source = std::move(model);
    return out;
}

ConditionalDistributionModel rearrange(const ConditionalDistributionModel& model) {
    ConditionalDistributionModel out = model;
    out.rearranged = true;
    return out;
}

void rearrange_values(std::span<double> values) { std::sort(values.begin(), values.end()); }

std::vector<double> ConditionalDistributionModel::cdf_row(std::span<const double> x) const {
    std::vector<double> out(y_grid.size());
    cdf_row(x, out);
    return out;
}

void ConditionalDistributionModel::cdf_row(std::span<const double> x, std::span<double> out) const {
    check_dimension(x, dim());
    const std::size_t m = y_grid.size();
    switch (kind) {
    case DistributionModelKind::distribution_regression:
    case DistributionModelKind::duration_dr:
        for (std::size_t k = 0; k < m; ++k) {
            out[k] = binary_probability(link, status[k], design_dot(coefficients, static_cast<Eigen::Index>(k), x));
        }
        break;
    case DistributionModelKind::derived_from_quantiles: {
        const auto& q_model = *source;
        const std::size_t nu = q_model.u_grid.size();
        const auto cells = u_cell_weights(q_model.u_grid);
        std::vector<std::pair<double, double>> atoms(nu);
        for (std::size_t k = 0; k < nu; ++k) {
            atoms[k] = {q_model.quantile(k, x), cells[k]};
        }
        std::stable_sort(atoms.begin(), atoms.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::size_t pos = 0;
        double cum = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            while (pos < nu && atoms[pos].first <= y_grid[k]) {
                cum += atoms[pos].second;
                ++pos;
            }
            out[k] = pos == nu ? 1.0 : std::min(cum, 1.0);
        }
        break;
    }
    case DistributionModelKind::minimum_wage: {
        std::vector<double> upper(m);
        structure->cdf_row(x, upper);
        const std::size_t t = rule.threshold_index;
        if (rule.strategy == MinimumWageStrategy::censoring) {
            for (std::size_t k = 0; k < m; ++k) {
                out[k] = k < t ? 0.0 : upper[k];
            }
        } else {
            std::vector<double> lower(m);
            minimum_source->cdf_row(x, lower);
            const double denominator = lower[t];
            if (!(denominator > 0.0)) {
                std::string where;
                for (std::size_t j = 0; j < x.size(); ++j) {
                    where += (j ? "," : "") + std::to_string(x[j]);
                }
                throw NumericalError("minimum-wage ratio has zero denominator at x = (" + where + ")");
            }
            for (std::size_t k = 0; k < m; ++k) {
                // Written as F_struct(m) * (F_src(y) / F_src(m)) so that the
                // ratio is exactly 1 at the threshold.
                out[k] = k < t ? upper[t] * (lower[k] / denominator) : upper[k];
            }
        }
        break;
    }
    }
    if (rearranged) {
        rearrange_values(out.subspan(0, m));
    }
}

std::size_t ConditionalDistributionModel::flagged_points() const {
    return static_cast<std::size_t>(
        std::count_if(status.begin(), status.end(), [](GridPointStatus s) { return s != GridPointStatus::ok; }));
}

std::string to_string(QuantileModelKind kind) {
    return kind == QuantileModelKind::location ? "location" : "quantile_regression";
}

std::string to_string(DistributionModelKind kind) {
    switch (kind) {
    case DistributionModelKind::distribution_regression:
        return "distribution_regression";
    case DistributionModelKind::duration_dr:
        return "duration_dr";
    case DistributionModelKind::derived_from_quantiles:
        return "derived_from_quantiles";
    case DistributionModelKind::minimum_wage:
        return "minimum_wage";
    }
    return "unknown";
}

std::string to_string(GridPointStatus status) {
    switch (status) {
    case GridPointStatus::ok:
        return "ok";
    case GridPointStatus::degenerate_zero:
        return "degenerate_zero";
    case GridPointStatus::degenerate_one:
        return "degenerate_one";
    case GridPointStatus::separated:
        return "separated";
    case GridPointStatus::bracket_failure:
        return "bracket_failure";
    }
    return "unknown";
}

std::string to_string(MinimumWageStrategy strategy) {
    return strategy == MinimumWageStrategy::ratio_scaling ? "ratio_scaling" : "censoring";
}

} // namespace cfdist
