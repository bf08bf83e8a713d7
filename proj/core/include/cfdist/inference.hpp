#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfdist/counterfactual.hpp"
#include "cfdist/data.hpp"

namespace cfdist {

/// Exchangeable bootstrap weight laws. `unit` draws all-ones weights and
/// exists to check pipelines against their point estimate.
enum class WeightScheme { multinomial, bayesian, wild, k_of_n, subsample, unit };

/// Law of the i.i.d. wild-bootstrap weights; both have mean one and variance one.
enum class WildLaw { exponential, poisson };

struct BootstrapPlan {
    WeightScheme scheme = WeightScheme::multinomial;
    std::size_t replications = 100;
    std::uint64_t master_seed = 0;
    /// Resample size for k_of_n and subsample.
    std::size_t k = 0;
    WildLaw wild_law = WildLaw::exponential;

    /// Throws ConfigError when the plan is unusable for a sample of size n.
    void validate(std::size_t n) const;

    /// Factor sqrt(m / n) (m the effective bootstrap sample size) that puts
    /// bootstrap deviations on the scale of the full-sample estimator.
    double deviation_scale(std::size_t n) const;
};

/// Weight vector for replication `replication` of `plan`. The random stream is
/// a pure function of (master_seed, replication, stream), so replications can
/// be generated in any order.
std::vector<double> gen_weights(const BootstrapPlan& plan, std::size_t n, std::size_t replication,
                                std::uint32_t stream = 0);

/// A curve-valued statistic of a weighted dataset.
using CurveStatistic = std::function<std::vector<double>(const GroupedDataset&)>;

struct BootstrapDraws {
    /// One row per successful replication, in replication order.
    Eigen::MatrixXd draws;
    std::vector<std::size_t> replications;
    std::vector<std::size_t> failed;
    std::vector<std::string> failure_messages;
    double deviation_scale = 1.0;
};

/// Recomputes `statistic` with both groups' weights multiplied by independent
/// draws from `plan`. Failed replications are dropped; more than 10% failures
/// raise NumericalError.
BootstrapDraws bootstrap_curves(const GroupedDataset& dataset, const CurveStatistic& statistic,
                                const BootstrapPlan& plan, unsigned threads = 1);

struct UniformBand {
    FunctionalCurve estimate;
    FunctionalCurve lower;
    FunctionalCurve upper;
    FunctionalCurve pointwise_se;
    double level = 0.0;
    double critical_value = 0.0;
};

/// Normal-consistent interquartile range of the bootstrap draws at each grid
/// point (IQR / 1.349). Where the IQR vanishes the root-mean-square deviation
/// is used instead; the result is floored at machine epsilon times the curve's scale.
/// All zeros when the estimate and every draw are identically zero.
std::vector<double> robust_scale(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws,
                                 double deviation_scale = 1.0);

/// Sup-t band: estimate +- c * s(t), with c the `level` quantile of
/// sup_t |draw_b(t) - estimate(t)| / s(t). An identically zero curve with
/// identically zero draws gets a zero-width band with c = 0.
UniformBand uniform_band(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws, double level,
                         double deviation_scale = 1.0);

/// Per-grid-point percentile-t critical values, for comparison with the uniform one.
std::vector<double> pointwise_critical_values(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws,
                                              double level, double deviation_scale = 1.0);

enum class KsNull { no_effect, constant_effect, positive_effect };

struct KsTestReport {
    KsNull null = KsNull::no_effect;
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t replications = 0;
};

/// Kolmogorov-Smirnov type test of an effect curve against `null`, with the
/// bootstrap p-value computed from the centered draws.
KsTestReport ks_test(const FunctionalCurve& estimate, const Eigen::MatrixXd& draws, KsNull null,
                     double deviation_scale = 1.0);

std::string to_string(WeightScheme scheme);
WeightScheme parse_weight_scheme(const std::string& name);
std::string to_string(KsNull null);
KsNull parse_ks_null(const std::string& name);

} // namespace cfdist
