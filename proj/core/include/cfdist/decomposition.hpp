#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfdist/counterfactual.hpp"
#include "cfdist/data.hpp"
#include "cfdist/estimators.hpp"
#include "cfdist/inference.hpp"

namespace cfdist {

/// Minimum-wage levels in outcome units. m_old is the base-period minimum,
/// m_new the one in force when the recent conditional structure was observed.
struct MinWagePolicy {
    MinimumWageStrategy strategy = MinimumWageStrategy::ratio_scaling;
    double m_old = 0.0;
    double m_new = 0.0;
};

/// Grid point used for a requested threshold: the largest y_k <= minimum.
struct ThresholdAlignment {
    std::size_t index = 0;
    double grid_value = 0.0;
    bool exact = true;
};

ThresholdAlignment align_threshold(std::span<const double> y_grid, double minimum);

/// F(y|x) of `structure` with the minimum wage moved to `minimum`.
///
/// ratio_scaling: below the minimum, F_src(y|x) * F_struct(m|x) / F_src(m|x);
/// at and above it, F_struct(y|x). censoring: 0 below, F_struct above.
/// Both models must share the y grid.
ConditionalDistributionModel impose_minimum_wage(std::shared_ptr<const ConditionalDistributionModel> structure,
                                                 std::shared_ptr<const ConditionalDistributionModel> minimum_source,
                                                 MinimumWageStrategy strategy, double minimum);

/// Recent-period structure under the base-period minimum m_old.
ConditionalDistributionModel minwage_counterfactual_cdf(std::shared_ptr<const ConditionalDistributionModel> model_new,
                                                        std::shared_ptr<const ConditionalDistributionModel> model_old,
                                                        const MinWagePolicy& policy);

/// P(union = 1 | x), evaluated on the full covariate vector.
using UnionProbability = std::function<double(std::span<const double> x)>;

/// Binary-response model of union status on a subset of the covariates.
struct UnionModel {
    Link link = Link::logit;
    std::size_t union_column = 0;
    std::vector<std::size_t> columns;
    Eigen::VectorXd beta;
    GridPointStatus status = GridPointStatus::ok;

    double probability(std::span<const double> x) const;
    UnionProbability as_function() const;
};

/// Fits union status (a 0/1 covariate) on `z_columns` of the base sample.
UnionModel fit_union_model(const GroupSample& base, std::size_t union_column, std::vector<std::size_t> z_columns,
                           Link link = Link::logit);

/// sum_i w_i [p(z_i) F(y|1,z_i) + (1 - p(z_i)) F(y|0,z_i)] over `covariate_sample`, rearranged.
StepDistribution union_reweighted_cdf(const ConditionalDistributionModel& model, std::size_t union_column,
                                      const UnionProbability& union_probability, const GroupSample& covariate_sample);

enum class ConditionalEstimator { distribution_regression, duration_dr, quantile_regression, location };

struct EstimatorChoice {
    ConditionalEstimator kind = ConditionalEstimator::distribution_regression;
    Link link = Link::logit;
    /// Anchor threshold for duration_dr.
    double y0 = 0.0;
};

std::string to_string(ConditionalEstimator kind);
ConditionalEstimator parse_estimator(const std::string& name);

/// Fits the chosen estimator on one group and returns it in distribution form
/// (quantile kinds go through qf_to_cdf on `grids.y_grid`).
std::shared_ptr<const ConditionalDistributionModel> fit_conditional_distribution(const GroupSample& sample,
                                                                                  const EstimatorChoice& choice,
                                                                                  const EvaluationGrids& grids,
                                                                                  const FitOptions& options);

enum class DecompositionOrder { forward, reverse };

struct DecompositionConfig {
    EstimatorChoice estimator;
    MinWagePolicy policy;
    std::vector<Functional> functionals{Functional::quantile};
    DecompositionOrder order = DecompositionOrder::forward;
    std::string union_column = "union";
    /// Covariates of the union model; empty means every other covariate.
    std::vector<std::string> union_covariates;
    EvaluationGrids grids;
    FitOptions fit;
};

struct DecompositionComponent {
    std::string name;
    FunctionalCurve curve;
    std::optional<UniformBand> band;
};

/// Total change of one functional and its sequential components.
struct DecompositionReport {
    Functional functional = Functional::quantile;
    FunctionalCurve total;
    std::optional<UniformBand> total_band;
    std::vector<DecompositionComponent> components;
    DecompositionOrder order = DecompositionOrder::forward;
};

struct DecompositionDiagnostics {
    ThresholdAlignment threshold;
    /// Covariate points whose ratio denominator F_src(m|x) is below 1e-6.
    std::size_t small_denominators = 0;
    std::size_t flagged_points_base = 0;
    std::size_t flagged_points_recent = 0;
    GridPointStatus union_status = GridPointStatus::ok;
};

struct DecompositionResult {
    /// Chain from the recent observed distribution to the base one; labels
    /// describe (structure, minimum, union, covariates) periods.
    std::vector<std::string> chain_labels;
    std::vector<StepDistribution> chain;
    std::vector<DecompositionReport> reports;
    DecompositionDiagnostics diagnostics;
};

DecompositionResult decompose(const GroupedDataset& dataset, const DecompositionConfig& config);

/// Re-runs the full decomposition under `plan` and attaches a uniform band to
/// every total and component. Returns the draws flattened in report order.
BootstrapDraws attach_bands(DecompositionResult& result, const GroupedDataset& dataset,
                            const DecompositionConfig& config, const BootstrapPlan& plan, double level,
                            unsigned threads = 1);

/// Flattens totals and components of every report, in report order.
std::vector<double> flatten(const DecompositionResult& result);

struct VarianceChannels {
    double between = 0.0;
    double within = 0.0;
};

/// Between/within split of Var[Y] for a linear quantile model with X independent of U.
VarianceChannels variance_channels(const ConditionalQuantileModel& model, const GroupSample& covariate_sample);

/// Nadaraya-Watson smoothing with a Gaussian kernel in the index variable.
/// For display only.
FunctionalCurve gaussian_smooth(const FunctionalCurve& curve, double bandwidth = 0.015);

} // namespace cfdist
