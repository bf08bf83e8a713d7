#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfdist/data.hpp"
#include "cfdist/links.hpp"

namespace cfdist {

/// Options shared by every estimator.
struct FitOptions {
    /// Names of the covariate columns; used in error messages. Defaults to x1, x2, ...
    std::vector<std::string> covariate_names;
    /// Worker threads for per-grid-point fits. Results do not depend on it.
    unsigned threads = 1;
    /// Interior-point iteration budget for quantile regression.
    int max_iterations = 200;
    /// Relative duality-gap tolerance for quantile regression.
    double tolerance = 1e-9;
};

/// Axis-aligned bounding box of the estimation covariates.
struct SupportBox {
    std::vector<double> lower;
    std::vector<double> upper;

    static SupportBox of(const GroupSample& sample);
    bool contains(std::span<const double> x) const;
};

enum class QuantileModelKind { location, quantile_regression };

/// Q(u|x) on a u-grid. Row k of `coefficients` holds the coefficient vector
/// (intercept first) at u_grid[k], so Q(u_k|x) = (1, x')' row_k.
struct ConditionalQuantileModel {
    QuantileModelKind kind = QuantileModelKind::quantile_regression;
    std::vector<double> u_grid;
    Eigen::MatrixXd coefficients;
    /// Location model only: least-squares coefficients and residual quantiles;
    /// row k equals slope with alpha[k] added to the intercept.
    Eigen::VectorXd slope;
    std::vector<double> alpha;
    std::vector<std::string> covariate_names;
    SupportBox support;

    std::size_t dim() const noexcept { return covariate_names.size(); }
    double quantile(std::size_t k, std::span<const double> x) const;
    /// Q(u_k|x) for every grid point.
    void quantiles(std::span<const double> x, std::span<double> out) const;
};

enum class DistributionModelKind { distribution_regression, duration_dr, derived_from_quantiles, minimum_wage };

enum class GridPointStatus {
    ok,
    degenerate_zero,  ///< no mass at or below y: F = 0
    degenerate_one,   ///< all mass at or below y: F = 1
    separated,        ///< complete separation; index capped, probabilities clamped
    bracket_failure,  ///< duration model: no sign change for the alpha root
};

enum class MinimumWageStrategy { ratio_scaling, censoring };

/// Splices a minimum-wage regime into a conditional distribution model.
struct MinimumWageRule {
    MinimumWageStrategy strategy = MinimumWageStrategy::ratio_scaling;
    /// Requested minimum and the grid point actually used (largest y <= minimum).
    double minimum = 0.0;
    std::size_t threshold_index = 0;
};

/// F(y|x) on a y-grid.
///
/// Regression kinds evaluate Lambda((1, x')' row_k) with the index capped at
/// +-kIndexCap. `derived_from_quantiles` integrates 1{Q(u|x) <= y} over the
/// u-grid cells of `source`. `minimum_wage` combines `structure` (conditional
/// wage structure) and `minimum_source` (the regime whose distribution below
/// the minimum is borrowed) according to `rule`.
struct ConditionalDistributionModel {
    DistributionModelKind kind = DistributionModelKind::distribution_regression;
    Link link = Link::logit;
    std::vector<double> y_grid;
    Eigen::MatrixXd coefficients;
    std::vector<GridPointStatus> status;
    /// duration_dr only: shared slope block (intercept first) and alpha(y).
    Eigen::VectorXd slope;
    std::vector<double> alpha;
    double anchor = 0.0;
    std::shared_ptr<const ConditionalQuantileModel> source;
    std::shared_ptr<const ConditionalDistributionModel> structure;
    std::shared_ptr<const ConditionalDistributionModel> minimum_source;
    MinimumWageRule rule;
    /// Sort each evaluated row over y (monotone rearrangement).
    bool rearranged = false;
    std::vector<std::string> covariate_names;
    SupportBox support;

    std::size_t dim() const noexcept { return covariate_names.size(); }

    /// F(y_k|x) for every grid point, rearranged when `rearranged` is set.
    void cdf_row(std::span<const double> x, std::span<double> out) const;
    std::vector<double> cdf_row(std::span<const double> x) const;

    std::size_t flagged_points() const;
};

ConditionalQuantileModel fit_location_model(const GroupSample& sample, std::span<const double> u_grid,
                                            const FitOptions& options = {});

ConditionalQuantileModel fit_quantile_regression(const GroupSample& sample, std::span<const double> u_grid,
                                                 const FitOptions& options = {});

ConditionalDistributionModel fit_distribution_regression(const GroupSample& sample, std::span<const double> y_grid,
                                                         Link link = Link::logit, const FitOptions& options = {});

/// F(y|x) = Lambda(alpha(y) + x'beta) with alpha(y0) = 0; y0 must be a grid point.
ConditionalDistributionModel fit_duration_dr(const GroupSample& sample, std::span<const double> y_grid, Link link,
                                             double y0, const FitOptions& options = {});

/// F(y|x) = measure of {u : Q(u|x) <= y} under the u-grid cell weights.
ConditionalDistributionModel qf_to_cdf(std::shared_ptr<const ConditionalQuantileModel> model,
                                       std::span<const double> y_grid);

/// Copy of `model` whose rows are rearranged at evaluation time.
ConditionalDistributionModel rearrange(const ConditionalDistributionModel& model);

/// In-place monotone rearrangement of one vector of CDF values.
void rearrange_values(std::span<double> values);

/// Length of the cell around each u-grid point; the cells partition (0,1).
std::vector<double> u_cell_weights(std::span<const double> u_grid);

// Lower-level pieces, exposed for diagnostics and tests.

struct QuantileRegressionFit {
    Eigen::VectorXd beta;
    double objective = 0.0;
    double duality_gap = 0.0;
    int iterations = 0;
};

/// Weighted check-loss objective sum_i w_i rho_u(y_i - z_i'beta).
double check_loss(const Eigen::MatrixXd& design, const Eigen::VectorXd& outcome, const Eigen::VectorXd& weights,
                  const Eigen::VectorXd& beta, double u);

/// Minimizes the weighted check loss with a primal-dual interior point method,
/// then moves to an optimal basic solution when one is found nearby.
QuantileRegressionFit solve_quantile_regression(const Eigen::MatrixXd& design, const Eigen::VectorXd& outcome,
                                                const Eigen::VectorXd& weights, double u, int max_iterations = 200,
                                                double tolerance = 1e-9);

struct BinaryFit {
    Eigen::VectorXd beta;
    GridPointStatus status = GridPointStatus::ok;
    int iterations = 0;
    double score_norm = 0.0;
};

/// Weighted binary-response maximum likelihood of `indicator` on `design`.
BinaryFit fit_binary_response(const Eigen::MatrixXd& design, const Eigen::VectorXd& indicator,
                              const Eigen::VectorXd& weights, Link link);

/// Evaluates a fitted binary response at one design row, applying the clamping policy.
double binary_probability(Link link, GridPointStatus status, double index);

/// Throws SingularDesignError naming the first column that is linearly
/// dependent on the preceding ones (positive-weight rows only).
void require_full_rank(const Eigen::MatrixXd& design, const Eigen::VectorXd& weights,
                       const std::vector<std::string>& column_names);

std::vector<std::string> design_column_names(const std::vector<std::string>& covariate_names, std::size_t p);

std::string to_string(QuantileModelKind kind);
std::string to_string(DistributionModelKind kind);
std::string to_string(GridPointStatus status);
std::string to_string(MinimumWageStrategy strategy);

} // namespace cfdist
