#include "cfdist/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cfdist/error.hpp"

namespace cfdist {

namespace {

constexpr double kSmallDenominator = 1e-6;

std::vector<double> row_of(const GroupSample& sample, std::size_t i) {
    std::vector<double> x(sample.dim());
    for (std::size_t j = 0; j < x.size(); ++j) {
        x[j] = sample.covariates()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    return x;
}

void require_binary(const GroupSample& sample, std::size_t column, const std::string& name) {
    const auto col = sample.covariates().col(static_cast<Eigen::Index>(column));
    for (Eigen::Index i = 0; i < col.size(); ++i) {
        if (col[i] != 0.0 && col[i] != 1.0) {
            throw DataError("union column '" + name + "' must be 0/1, found " + std::to_string(col[i]));
        }
    }
}

std::size_t count_small_denominators(const ConditionalDistributionModel& source, std::size_t threshold,
                                     const GroupSample& sample) {
    std::size_t count = 0;
    std::vector<double> row(source.y_grid.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
        if (!(sample.weights()[static_cast<Eigen::Index>(i)] > 0.0)) {
            continue;
        }
        source.cdf_row(row_of(sample, i), row);
        if (row[threshold] < kSmallDenominator) {
            ++count;
        }
    }
    return count;
}

FunctionalCurve difference(const FunctionalCurve& a, const FunctionalCurve& b, const std::string& label) {
    FunctionalCurve d{a.grid, {}, label};
    d.values.resize(a.values.size());
    for (std::size_t t = 0; t < a.values.size(); ++t) {
        d.values[t] = a.values[t] - b.values[t];
    }
    return d;
}

} // namespace

ThresholdAlignment align_threshold(std::span<const double> y_grid, double minimum) {
    const auto it = std::upper_bound(y_grid.begin(), y_grid.end(),
                                     minimum + 1e-12 * std::max(1.0, std::abs(minimum)));
    if (it == y_grid.begin()) {
        throw DomainError("minimum wage " + std::to_string(minimum) + " lies below the y grid");
    }
    ThresholdAlignment a;
    a.index = static_cast<std::size_t>(it - y_grid.begin()) - 1;
    a.grid_value = y_grid[a.index];
    a.exact = std::abs(a.grid_value - minimum) <= 1e-12 * std::max(1.0, std::abs(minimum));
    return a;
}

ConditionalDistributionModel impose_minimum_wage(std::shared_ptr<const ConditionalDistributionModel> structure,
                                                 std::shared_ptr<const ConditionalDistributionModel> minimum_source,
                                                 MinimumWageStrategy strategy, double minimum) {
    if (!structure || !minimum_source) {
        throw ConfigError("minimum-wage counterfactual needs both conditional models");
    }
    const auto& a = structure->y_grid;
    const auto& b = minimum_source->y_grid;
    if (a.size() != b.size()) {
        throw DomainError("minimum-wage models use different y grids");
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (std::abs(a[k] - b[k]) > 1e-9 * std::max(1.0, std::abs(a[k]))) {
            throw DomainError("minimum-wage models use different y grids");
        }
    }
    if (structure->dim() != minimum_source->dim()) {
        throw ConfigError("minimum-wage models use different covariate dimensions");
    }
    ConditionalDistributionModel model;
    model.kind = DistributionModelKind::minimum_wage;
    model.link = structure->link;
    model.y_grid = structure->y_grid;
    model.status.assign(model.y_grid.size(), GridPointStatus::ok);
    model.covariate_names = structure->covariate_names;
    model.support = structure->support;
    model.rule.strategy = strategy;
    model.rule.minimum = minimum;
    model.rule.threshold_index = align_threshold(model.y_grid, minimum).index;
    model.rearranged = true;
    model.structure = std::move(structure);
    model.minimum_source = std::move(minimum_source);
    return model;
}

ConditionalDistributionModel minwage_counterfactual_cdf(std::shared_ptr<const ConditionalDistributionModel> model_new,
                                                        std::shared_ptr<const ConditionalDistributionModel> model_old,
                                                        const MinWagePolicy& policy) {
    return impose_minimum_wage(std::move(model_new), std::move(model_old), policy.strategy, policy.m_old);
}

double UnionModel::probability(std::span<const double> x) const {
    double index = beta[0];
    for (std::size_t j = 0; j < columns.size(); ++j) {
        index += beta[static_cast<Eigen::Index>(j) + 1] * x[columns[j]];
    }
    return binary_probability(link, status, index);
}

UnionProbability UnionModel::as_function() const {
    return [model = *this](std::span<const double> x) { return model.probability(x); };
}

UnionModel fit_union_model(const GroupSample& base, std::size_t union_column, std::vector<std::size_t> z_columns,
                           Link link) {
    if (union_column >= base.dim()) {
        throw ConfigError("union column index out of range");
    }
    require_binary(base, union_column, "union");
    const auto n = static_cast<Eigen::Index>(base.size());
    Eigen::MatrixXd design(n, static_cast<Eigen::Index>(z_columns.size()) + 1);
    design.col(0).setOnes();
    for (std::size_t j = 0; j < z_columns.size(); ++j) {
        if (z_columns[j] == union_column || z_columns[j] >= base.dim()) {
            throw ConfigError("union model covariates must exclude the union column");
        }
        design.col(static_cast<Eigen::Index>(j) + 1) = base.covariates().col(static_cast<Eigen::Index>(z_columns[j]));
    }
    const Eigen::VectorXd indicator = base.covariates().col(static_cast<Eigen::Index>(union_column));

    UnionModel model;
    model.link = link;
    model.union_column = union_column;
    model.columns = std::move(z_columns);
    double share = 0.0;
    double rest = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        (indicator[i] > 0.5 ? share : rest) += base.weights()[i];
    }
    if (share <= 0.0 || rest <= 0.0) {
        model.beta = Eigen::VectorXd::Zero(design.cols());
        model.status = share <= 0.0 ? GridPointStatus::degenerate_zero : GridPointStatus::degenerate_one;
        return model;
    }
    std::vector<std::string> names{"(intercept)"};
    for (std::size_t j : model.columns) {
        names.push_back("column " + std::to_string(j));
    }
    require_full_rank(design, base.weights(), names);
    const auto fit = fit_binary_response(design, indicator, base.weights(), link);
    model.beta = fit.beta;
    model.status = fit.status;
    return model;
}

StepDistribution union_reweighted_cdf(const ConditionalDistributionModel& model, std::size_t union_column,
                                      const UnionProbability& union_probability, const GroupSample& covariate_sample) {
    const std::size_t m = model.y_grid.size();
    std::vector<double> acc(m, 0.0);
    std::vector<double> with_union(m);
    std::vector<double> without_union(m);
    for (std::size_t i = 0; i < covariate_sample.size(); ++i) {
        const double w = covariate_sample.weights()[static_cast<Eigen::Index>(i)];
        if (!(w > 0.0)) {
            continue;
        }
        auto x = row_of(covariate_sample, i);
        const double p = union_probability(x);
        x[union_column] = 1.0;
        model.cdf_row(x, with_union);
        x[union_column] = 0.0;
        model.cdf_row(x, without_union);
        for (std::size_t k = 0; k < m; ++k) {
            acc[k] += w * (p * with_union[k] + (1.0 - p) * without_union[k]);
        }
    }
    rearrange_values(acc);
    for (double& v : acc) {
        v = std::clamp(v, 0.0, 1.0);
    }
    return {model.y_grid, std::move(acc)};
}

std::string to_string(ConditionalEstimator kind) {
    switch (kind) {
    case ConditionalEstimator::distribution_regression:
        return "dr";
    case ConditionalEstimator::duration_dr:
        return "duration_dr";
    case ConditionalEstimator::quantile_regression:
        return "qr";
    case ConditionalEstimator::location:
        return "location";
    }
    return "unknown";
}

ConditionalEstimator parse_estimator(const std::string& name) {
    for (auto k : {ConditionalEstimator::distribution_regression, ConditionalEstimator::duration_dr,
                   ConditionalEstimator::quantile_regression, ConditionalEstimator::location}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown estimator '" + name + "' (expected dr, duration_dr, qr or location)");
}

std::shared_ptr<const ConditionalDistributionModel> fit_conditional_distribution(const GroupSample& sample,
                                                                                  const EstimatorChoice& choice,
                                                                                  const EvaluationGrids& grids,
                                                                                  const FitOptions& options) {
    switch (choice.kind) {
    case ConditionalEstimator::distribution_regression:
        return std::make_shared<const ConditionalDistributionModel>(
            rearrange(fit_distribution_regression(sample, grids.y_grid, choice.link, options)));
    case ConditionalEstimator::duration_dr:
        return std::make_shared<const ConditionalDistributionModel>(
            fit_duration_dr(sample, grids.y_grid, choice.link, choice.y0, options));
    case ConditionalEstimator::quantile_regression: {
        auto q = std::make_shared<const ConditionalQuantileModel>(fit_quantile_regression(sample, grids.u_grid, options));
        return std::make_shared<const ConditionalDistributionModel>(qf_to_cdf(std::move(q), grids.y_grid));
    }
    case ConditionalEstimator::location: {
        auto q = std::make_shared<const ConditionalQuantileModel>(fit_location_model(sample, grids.u_grid, options));
        return std::make_shared<const ConditionalDistributionModel>(qf_to_cdf(std::move(q), grids.y_grid));
    }
    }
    throw ConfigError("unhandled estimator");
}

DecompositionResult decompose(const GroupedDataset& dataset, const DecompositionConfig& config) {
    if (config.functionals.empty()) {
        throw ConfigError("decomposition needs at least one functional");
    }
    const std::size_t union_column = dataset.covariate_index(config.union_column);
    for (int g = 0; g < 2; ++g) {
        require_binary(dataset.group(g), union_column, config.union_column);
    }
    std::vector<std::size_t> z_columns;
    if (config.union_covariates.empty()) {
        for (std::size_t j = 0; j < dataset.dim(); ++j) {
            if (j != union_column) {
                z_columns.push_back(j);
            }
        }
    } else {
        for (const auto& name : config.union_covariates) {
            z_columns.push_back(dataset.covariate_index(name));
        }
    }

    FitOptions options = config.fit;
    options.covariate_names = dataset.covariate_names();
    const auto& base = dataset.group(0);
    const auto& recent = dataset.group(1);
    const auto model_base = fit_conditional_distribution(base, config.estimator, config.grids, options);
    const auto model_recent = fit_conditional_distribution(recent, config.estimator, config.grids, options);

    DecompositionResult result;
    result.diagnostics.flagged_points_base = model_base->flagged_points();
    result.diagnostics.flagged_points_recent = model_recent->flagged_points();

    const bool forward = config.order == DecompositionOrder::forward;
    // Structure period s, the other period o. Forward: s = recent, o = base.
    const auto& structure = forward ? model_recent : model_base;
    const auto& other = forward ? model_base : model_recent;
    const auto& s_sample = forward ? recent : base;
    const auto& o_sample = forward ? base : recent;
    const double minimum = forward ? config.policy.m_old : config.policy.m_new;

    auto counterfactual = std::make_shared<const ConditionalDistributionModel>(
        impose_minimum_wage(structure, other, config.policy.strategy, minimum));
    result.diagnostics.threshold = align_threshold(counterfactual->y_grid, minimum);
    if (config.policy.strategy == MinimumWageStrategy::ratio_scaling) {
        const auto t = counterfactual->rule.threshold_index;
        result.diagnostics.small_denominators =
            count_small_denominators(*other, t, s_sample) + count_small_denominators(*other, t, o_sample);
    }
    const auto union_model = fit_union_model(o_sample, union_column, z_columns);
    result.diagnostics.union_status = union_model.status;

    // Chain endpoints are the two observed periods; each step changes one factor.
    const auto observed_s = marginal_cdf(*structure, s_sample).distribution;
    const auto minimum_moved = marginal_cdf(*counterfactual, s_sample).distribution;
    const auto union_moved = union_reweighted_cdf(*counterfactual, union_column, union_model.as_function(), s_sample);
    const auto covariates_moved = marginal_cdf(*counterfactual, o_sample).distribution;
    const auto observed_o = marginal_cdf(*other, o_sample).distribution;

    std::vector<std::string> names;
    if (forward) {
        result.chain_labels = {"Y1,m1,U1,Z1", "Y1,m0,U1,Z1", "Y1,m0,U0,Z1", "Y1,m0,U0,Z0", "Y0,m0,U0,Z0"};
        result.chain = {observed_s, minimum_moved, union_moved, covariates_moved, observed_o};
        names = {"minimum_wage", "union", "composition", "price"};
    } else {
        result.chain_labels = {"Y1,m1,U1,Z1", "Y0,m1,U1,Z1", "Y0,m1,U1,Z0", "Y0,m1,U0,Z0", "Y0,m0,U0,Z0"};
        result.chain = {observed_o, covariates_moved, union_moved, minimum_moved, observed_s};
        names = {"price", "composition", "union", "minimum_wage"};
    }

    for (const auto f : config.functionals) {
        std::vector<FunctionalCurve> values;
        for (const auto& dist : result.chain) {
            values.push_back(apply_functional(f, dist, config.grids));
        }
        DecompositionReport report;
        report.functional = f;
        report.order = config.order;
        report.total = difference(values.front(), values.back(), to_string(f) + ":total");
        for (std::size_t c = 0; c < names.size(); ++c) {
            report.components.push_back(
                {names[c], difference(values[c], values[c + 1], to_string(f) + ":" + names[c]), std::nullopt});
        }
        result.reports.push_back(std::move(report));
    }
    return result;
}

std::vector<double> flatten(const DecompositionResult& result) {
    std::vector<double> out;
    for (const auto& report : result.reports) {
        out.insert(out.end(), report.total.values.begin(), report.total.values.end());
        for (const auto& c : report.components) {
            out.insert(out.end(), c.curve.values.begin(), c.curve.values.end());
        }
    }
    return out;
}

BootstrapDraws attach_bands(DecompositionResult& result, const GroupedDataset& dataset,
                            const DecompositionConfig& config, const BootstrapPlan& plan, double level,
                            unsigned threads) {
    DecompositionConfig inner = config;
    inner.fit.threads = 1;
    const CurveStatistic statistic = [&inner](const GroupedDataset& d) { return flatten(decompose(d, inner)); };
    auto draws = bootstrap_curves(dataset, statistic, plan, threads);

    Eigen::Index offset = 0;
    auto band_for = [&](const FunctionalCurve& curve) {
        const auto len = static_cast<Eigen::Index>(curve.values.size());
        const Eigen::MatrixXd block = draws.draws.middleCols(offset, len);
        offset += len;
        return uniform_band(curve, block, level, draws.deviation_scale);
    };
    for (auto& report : result.reports) {
        report.total_band = band_for(report.total);
        for (auto& c : report.components) {
            c.band = band_for(c.curve);
        }
    }
    return draws;
}

VarianceChannels variance_channels(const ConditionalQuantileModel& model, const GroupSample& covariate_sample) {
    if (model.kind != QuantileModelKind::quantile_regression) {
        throw ConfigError("variance channels need a linear quantile regression model");
    }
    if (covariate_sample.dim() != model.dim()) {
        throw ConfigError("covariate sample does not match the model dimension");
    }
    const auto cells = u_cell_weights(model.u_grid);
    const Eigen::Index q = model.coefficients.cols();

    Eigen::VectorXd beta_bar = Eigen::VectorXd::Zero(q);
    for (std::size_t k = 0; k < cells.size(); ++k) {
        beta_bar += cells[k] * model.coefficients.row(static_cast<Eigen::Index>(k)).transpose();
    }
    Eigen::MatrixXd beta_cov = Eigen::MatrixXd::Zero(q, q);
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const Eigen::VectorXd d = model.coefficients.row(static_cast<Eigen::Index>(k)).transpose() - beta_bar;
        beta_cov += cells[k] * d * d.transpose();
    }

    const Eigen::MatrixXd z = covariate_sample.design();
    const Eigen::VectorXd& w = covariate_sample.weights();
    const Eigen::VectorXd z_mean = z.transpose() * w;
    const Eigen::MatrixXd second = z.transpose() * w.asDiagonal() * z;
    const Eigen::MatrixXd z_cov = second - z_mean * z_mean.transpose();

    VarianceChannels out;
    out.between = beta_bar.dot(z_cov * beta_bar);
    out.within = (second * beta_cov).trace();
    return out;
}

FunctionalCurve gaussian_smooth(const FunctionalCurve& curve, double bandwidth) {
    if (!(bandwidth > 0.0)) {
        throw ConfigError("smoothing bandwidth must be positive");
    }
    FunctionalCurve out{curve.grid, {}, curve.label + ":smoothed"};
    out.values.reserve(curve.values.size());
    for (double at : curve.grid) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t j = 0; j < curve.grid.size(); ++j) {
            const double z = (at - curve.grid[j]) / bandwidth;
            const double k = std::exp(-0.5 * z * z);
            num += k * curve.values[j];
            den += k;
        }
        out.values.push_back(num / den);
    }
    return out;
}

} // namespace cfdist
