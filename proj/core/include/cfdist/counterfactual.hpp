#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfdist/data.hpp"
#include "cfdist/estimators.hpp"

namespace cfdist {

/// Known covariate map x -> g(x), applied before the conditional model is evaluated.
using CovariateTransform = std::function<void(std::span<const double> in, std::span<double> out)>;

/// x_j -> scale_j * x_j + shift_j.
CovariateTransform affine_transform(std::vector<double> scale, std::vector<double> shift);

/// Which group's conditional distribution is integrated against which
/// group's covariate distribution.
struct CounterfactualSpec {
    int conditional_group = 0;
    int covariate_group = 0;
    CovariateTransform transform;
};

/// Right-continuous CDF stored at the points of a grid.
struct StepDistribution {
    std::vector<double> y_grid;
    std::vector<double> cdf_values;

    /// F at an arbitrary point: value at the largest grid point <= y, 0 below the grid.
    double cdf_at(double y) const;
    /// Masses F(y_k) - F(y_{k-1}), with F(y_{-1}) = 0.
    std::vector<double> masses() const;
    double total_mass() const { return cdf_values.empty() ? 0.0 : cdf_values.back(); }
};

struct FunctionalCurve {
    std::vector<double> grid;
    std::vector<double> values;
    std::string label;
};

struct MarginalResult {
    StepDistribution distribution;
    /// Covariate points outside the model's estimation bounding box.
    std::size_t extrapolated = 0;
    double extrapolated_share = 0.0;
};

/// F(y) = sum_i w_i F(y | g(x_i)) over `covariates`, rearranged to be monotone.
MarginalResult marginal_cdf(const ConditionalDistributionModel& model, const GroupSample& covariates,
                            const CovariateTransform& transform = {});

/// As above, taking the covariate group from `spec`; `model` must be the
/// conditional model of spec.conditional_group.
MarginalResult marginal_cdf(const ConditionalDistributionModel& model, const GroupedDataset& dataset,
                            const CounterfactualSpec& spec);

/// Left inverse inf{y : F(y) >= u}. When F never reaches u the largest grid
/// point is returned and `underflow` is set.
double quantile(const StepDistribution& dist, double u, bool* underflow = nullptr);

FunctionalCurve quantile_function(const StepDistribution& dist, std::span<const double> u_grid);
FunctionalCurve cdf_curve(const StepDistribution& dist, std::span<const double> y_grid);

/// Q_counterfactual(u) - Q_reference(u).
FunctionalCurve quantile_effect(const StepDistribution& reference, const StepDistribution& counterfactual,
                                std::span<const double> u_grid);
/// F_counterfactual(y) - F_reference(y).
FunctionalCurve distribution_effect(const StepDistribution& reference, const StepDistribution& counterfactual,
                                    std::span<const double> y_grid);

/// Partial mean up to y over the overall mean. Requires nonnegative support.
double lorenz(const StepDistribution& dist, double y);
/// Lorenz ordinate in the probability index: (1/mean) * integral_0^p Q(s) ds.
FunctionalCurve lorenz_curve(const StepDistribution& dist, std::span<const double> p_grid);
/// 1 - 2 * integral_0^1 L(p) dp, integrated exactly over the atoms.
double gini(const StepDistribution& dist);

double mean(const StepDistribution& dist);
double variance(const StepDistribution& dist);

/// Distribution of individual effects Q_1(u|x) - Q_0(u|x) under rank
/// preservation, averaged over u-grid cells and the covariate sample.
/// The default delta grid has 401 points over [min - range, max + range].
struct EffectDistribution {
    StepDistribution distribution;
    double min_effect = 0.0;
    double max_effect = 0.0;
};

EffectDistribution effect_distribution(const ConditionalQuantileModel& model0, const ConditionalQuantileModel& model1,
                                       const GroupSample& covariates,
                                       std::optional<std::vector<double>> delta_grid = std::nullopt);

/// Effect of moving the covariates through `transform`: Q_0(u|g(x)) - Q_0(u|x).
EffectDistribution effect_distribution(const ConditionalQuantileModel& model0, const CovariateTransform& transform,
                                       const GroupSample& covariates,
                                       std::optional<std::vector<double>> delta_grid = std::nullopt);

/// Summary functionals applied uniformly by the decomposition and the CLI.
enum class Functional { cdf, quantile, lorenz, gini, mean, variance, std_dev, q90_q10, q90_q50, q50_q10 };

std::string to_string(Functional f);
Functional parse_functional(const std::string& name);
bool is_scalar(Functional f);

/// Evaluates `f` on `dist`. Curve functionals use `grids.u_grid` (quantile,
/// lorenz) or `grids.y_grid` (cdf); scalars return a one-point curve at grid 0.
FunctionalCurve apply_functional(Functional f, const StepDistribution& dist, const EvaluationGrids& grids);

} // namespace cfdist
