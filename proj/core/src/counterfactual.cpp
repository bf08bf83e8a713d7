#include "cfdist/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfdist/error.hpp"

namespace cfdist {

namespace {

struct Atom {
    double value;
    double mass;
};

// Atoms with positive mass, normalized to total mass one.
std::vector<Atom> atoms_of(const StepDistribution& dist) {
    const auto masses = dist.masses();
    double total = 0.0;
    for (double m : masses) {
        total += m;
    }
    if (!(total > 0.0)) {
        throw DomainError("distribution carries no mass on its grid");
    }
    std::vector<Atom> atoms;
    for (std::size_t k = 0; k < masses.size(); ++k) {
        if (masses[k] > 0.0) {
            atoms.push_back({dist.y_grid[k], masses[k] / total});
        }
    }
    return atoms;
}

void require_nonnegative_support(const std::vector<Atom>& atoms) {
    for (const auto& a : atoms) {
        if (a.value < 0.0) {
            throw DomainError("Lorenz and Gini require nonnegative outcomes");
        }
    }
}

double positive_mean(const std::vector<Atom>& atoms) {
    double mu = 0.0;
    for (const auto& a : atoms) {
        mu += a.value * a.mass;
    }
    if (!(mu > 0.0)) {
        throw DomainError("Lorenz and Gini require a positive mean");
    }
    return mu;
}

std::vector<double> default_delta_grid(double lo, double hi) {
    double range = hi - lo;
    if (!(range > 1e-9 * (1.0 + std::max(std::abs(lo), std::abs(hi))))) {
        range = 1.0;
    }
    constexpr std::size_t kPoints = 401;
    const double start = lo - range;
    const double step = (hi + range - start) / static_cast<double>(kPoints - 1);
    std::vector<double> grid(kPoints);
    for (std::size_t k = 0; k < kPoints; ++k) {
        grid[k] = start + step * static_cast<double>(k);
    }
    grid.back() = hi + range;
    return grid;
}

template <class EffectFn>
EffectDistribution accumulate_effects(const std::vector<double>& u_grid, const GroupSample& covariates,
                                      std::optional<std::vector<double>> delta_grid, EffectFn&& effects_at) {
    const auto cells = u_cell_weights(u_grid);
    const std::size_t n = covariates.size();
    const std::size_t nu = u_grid.size();
    std::vector<double> effects(n * nu);
    std::vector<double> x(covariates.dim());
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(covariates.weights()[static_cast<Eigen::Index>(i)] > 0.0)) {
            continue;
        }
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] = covariates.covariates()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        std::span<double> row(effects.data() + i * nu, nu);
        effects_at(x, row);
        for (double e : row) {
            lo = std::min(lo, e);
            hi = std::max(hi, e);
        }
    }

    EffectDistribution out;
    out.min_effect = lo;
    out.max_effect = hi;
    auto grid = delta_grid ? std::move(*delta_grid) : default_delta_grid(lo, hi);
    validate_grid(grid, false, "delta_grid");

    // Sort all (effect, mass) atoms once, then sweep the grid.
    std::vector<Atom> atoms;
    atoms.reserve(n * nu);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = covariates.weights()[static_cast<Eigen::Index>(i)];
        if (!(w > 0.0)) {
            continue;
        }
        for (std::size_t k = 0; k < nu; ++k) {
            atoms.push_back({effects[i * nu + k], w * cells[k]});
        }
    }
    std::stable_sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.value < b.value; });
    std::vector<double> cdf(grid.size());
    std::size_t pos = 0;
    double cum = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        while (pos < atoms.size() && atoms[pos].value <= grid[k]) {
            cum += atoms[pos].mass;
            ++pos;
        }
        cdf[k] = pos == atoms.size() ? 1.0 : std::min(cum, 1.0);
    }
    out.distribution = {std::move(grid), std::move(cdf)};
    return out;
}

} // namespace

CovariateTransform affine_transform(std::vector<double> scale, std::vector<double> shift) {
    if (scale.size() != shift.size()) {
        throw ConfigError("affine transform needs equally long scale and shift vectors");
    }
    return [scale = std::move(scale), shift = std::move(shift)](std::span<const double> in, std::span<double> out) {
        if (in.size() != scale.size() || out.size() != scale.size()) {
            throw ConfigError("covariate transform dimension mismatch: transform has " + std::to_string(scale.size()) +
                              " components, covariates have " + std::to_string(in.size()));
        }
        for (std::size_t j = 0; j < in.size(); ++j) {
            out[j] = scale[j] * in[j] + shift[j];
        }
    };
}

double StepDistribution::cdf_at(double y) const {
    const auto it = std::upper_bound(y_grid.begin(), y_grid.end(), y);
    if (it == y_grid.begin()) {
        return 0.0;
    }
    return cdf_values[static_cast<std::size_t>(it - y_grid.begin()) - 1];
}

std::vector<double> StepDistribution::masses() const {
    std::vector<double> m(cdf_values.size());
    double previous = 0.0;
    for (std::size_t k = 0; k < cdf_values.size(); ++k) {
        m[k] = std::max(cdf_values[k] - previous, 0.0);
        previous = std::max(previous, cdf_values[k]);
    }
    return m;
}

MarginalResult marginal_cdf(const ConditionalDistributionModel& model, const GroupSample& covariates,
                            const CovariateTransform& transform) {
    const std::size_t m = model.y_grid.size();
    const std::size_t p = covariates.dim();
    std::vector<double> acc(m, 0.0);
    std::vector<double> row(m);
    std::vector<double> x(p);
    std::vector<double> gx(model.dim());
    MarginalResult result;
    const auto& weights = covariates.weights();
    const auto& cov = covariates.covariates();
    if (!transform && p != model.dim()) {
        throw ConfigError("covariate dimension " + std::to_string(p) + " does not match model dimension " +
                          std::to_string(model.dim()));
    }
    for (std::size_t i = 0; i < covariates.size(); ++i) {
        const double w = weights[static_cast<Eigen::Index>(i)];
        if (!(w > 0.0)) {
            continue;
        }
        for (std::size_t j = 0; j < p; ++j) {
            x[j] = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        std::span<const double> eval = x;
        if (transform) {
            transform(x, gx);
            eval = gx;
        }
        if (!model.support.contains(eval)) {
            ++result.extrapolated;
        }
        model.cdf_row(eval, row);
        for (std::size_t k = 0; k < m; ++k) {
            acc[k] += w * row[k];
        }
    }
    rearrange_values(acc);
    for (double& v : acc) {
        v = std::clamp(v, 0.0, 1.0);
    }
    result.extrapolated_share = static_cast<double>(result.extrapolated) / static_cast<double>(covariates.size());
    result.distribution = {model.y_grid, std::move(acc)};
    return result;
}

MarginalResult marginal_cdf(const ConditionalDistributionModel& model, const GroupedDataset& dataset,
                            const CounterfactualSpec& spec) {
    return marginal_cdf(model, dataset.group(spec.covariate_group), spec.transform);
}

double quantile(const StepDistribution& dist, double u, bool* underflow) {
    if (!(u > 0.0 && u < 1.0)) {
        throw DomainError("quantile index must lie in (0,1), got " + std::to_string(u));
    }
    if (dist.y_grid.empty()) {
        throw DomainError("empty distribution");
    }
    const auto it = std::lower_bound(dist.cdf_values.begin(), dist.cdf_values.end(), u);
    if (underflow) {
        *underflow = it == dist.cdf_values.end();
    }
    if (it == dist.cdf_values.end()) {
        return dist.y_grid.back();
    }
    return dist.y_grid[static_cast<std::size_t>(it - dist.cdf_values.begin())];
}

FunctionalCurve quantile_function(const StepDistribution& dist, std::span<const double> u_grid) {
    FunctionalCurve c{{u_grid.begin(), u_grid.end()}, {}, "quantile"};
    c.values.reserve(u_grid.size());
    for (double u : u_grid) {
        c.values.push_back(quantile(dist, u));
    }
    return c;
}

FunctionalCurve cdf_curve(const StepDistribution& dist, std::span<const double> y_grid) {
    FunctionalCurve c{{y_grid.begin(), y_grid.end()}, {}, "cdf"};
    c.values.reserve(y_grid.size());
    for (double y : y_grid) {
        c.values.push_back(dist.cdf_at(y));
    }
    return c;
}

FunctionalCurve quantile_effect(const StepDistribution& reference, const StepDistribution& counterfactual,
                                std::span<const double> u_grid) {
    FunctionalCurve c{{u_grid.begin(), u_grid.end()}, {}, "quantile_effect"};
    for (double u : u_grid) {
        c.values.push_back(quantile(counterfactual, u) - quantile(reference, u));
    }
    return c;
}

FunctionalCurve distribution_effect(const StepDistribution& reference, const StepDistribution& counterfactual,
                                    std::span<const double> y_grid) {
    FunctionalCurve c{{y_grid.begin(), y_grid.end()}, {}, "distribution_effect"};
    for (double y : y_grid) {
        c.values.push_back(counterfactual.cdf_at(y) - reference.cdf_at(y));
    }
    return c;
}

double lorenz(const StepDistribution& dist, double y) {
    const auto atoms = atoms_of(dist);
    require_nonnegative_support(atoms);
    const double mu = positive_mean(atoms);
    double partial = 0.0;
    for (const auto& a : atoms) {
        if (a.value <= y) {
            partial += a.value * a.mass;
        }
    }
    return std::min(partial / mu, 1.0);
}

FunctionalCurve lorenz_curve(const StepDistribution& dist, std::span<const double> p_grid) {
    const auto atoms = atoms_of(dist);
    require_nonnegative_support(atoms);
    const double mu = positive_mean(atoms);
    FunctionalCurve c{{p_grid.begin(), p_grid.end()}, {}, "lorenz"};
    std::size_t pos = 0;
    double cum_prob = 0.0;
    double cum_mean = 0.0;
    for (double p : p_grid) {
        while (pos < atoms.size() && cum_prob + atoms[pos].mass <= p) {
            cum_prob += atoms[pos].mass;
            cum_mean += atoms[pos].value * atoms[pos].mass;
            ++pos;
        }
        double partial = cum_mean;
        if (pos < atoms.size()) {
            partial += atoms[pos].value * std::max(p - cum_prob, 0.0);
        }
        c.values.push_back(std::min(partial / mu, 1.0));
    }
    return c;
}

double gini(const StepDistribution& dist) {
    const auto atoms = atoms_of(dist);
    require_nonnegative_support(atoms);
    const double mu = positive_mean(atoms);
    // The Lorenz curve is linear between consecutive atom probabilities, so
    // the trapezoid rule over those knots is exact.
    double area = 0.0;
    double lorenz_prev = 0.0;
    double cum_mean = 0.0;
    for (const auto& a : atoms) {
        cum_mean += a.value * a.mass;
        const double lorenz_next = cum_mean / mu;
        area += 0.5 * a.mass * (lorenz_prev + lorenz_next);
        lorenz_prev = lorenz_next;
    }
    return std::clamp(1.0 - 2.0 * area, 0.0, 1.0);
}

double mean(const StepDistribution& dist) {
    double mu = 0.0;
    for (const auto& a : atoms_of(dist)) {
        mu += a.value * a.mass;
    }
    return mu;
}

double variance(const StepDistribution& dist) {
    const auto atoms = atoms_of(dist);
    double first = 0.0;
    double second = 0.0;
    for (const auto& a : atoms) {
        first += a.value * a.mass;
        second += a.value * a.value * a.mass;
    }
    return std::max(second - first * first, 0.0);
}

EffectDistribution effect_distribution(const ConditionalQuantileModel& model0, const ConditionalQuantileModel& model1,
                                       const GroupSample& covariates, std::optional<std::vector<double>> delta_grid) {
    if (model0.u_grid != model1.u_grid) {
        throw ConfigError("effect distribution requires quantile models on the same u grid");
    }
    const std::size_t nu = model0.u_grid.size();
    std::vector<double> q0(nu);
    return accumulate_effects(model0.u_grid, covariates, std::move(delta_grid),
                              [&](std::span<const double> x, std::span<double> out) {
                                  model0.quantiles(x, q0);
                                  model1.quantiles(x, out);
                                  for (std::size_t k = 0; k < nu; ++k) {
                                      out[k] -= q0[k];
                                  }
                              });
}

EffectDistribution effect_distribution(const ConditionalQuantileModel& model0, const CovariateTransform& transform,
                                       const GroupSample& covariates, std::optional<std::vector<double>> delta_grid) {
    const std::size_t nu = model0.u_grid.size();
    std::vector<double> q0(nu);
    std::vector<double> gx(model0.dim());
    return accumulate_effects(model0.u_grid, covariates, std::move(delta_grid),
                              [&](std::span<const double> x, std::span<double> out) {
                                  transform(x, gx);
                                  model0.quantiles(x, q0);
                                  model0.quantiles(gx, out);
                                  for (std::size_t k = 0; k < nu; ++k) {
                                      out[k] -= q0[k];
                                  }
                              });
}

std::string to_string(Functional f) {
    switch (f) {
    case Functional::cdf:
        return "cdf";
    case Functional::quantile:
        return "quantile";
    case Functional::lorenz:
        return "lorenz";
    case Functional::gini:
        return "gini";
    case Functional::mean:
        return "mean";
    case Functional::variance:
        return "variance";
    case Functional::std_dev:
        return "std_dev";
    case Functional::q90_q10:
        return "q90_q10";
    case Functional::q90_q50:
        return "q90_q50";
    case Functional::q50_q10:
        return "q50_q10";
    }
    return "unknown";
}

Functional parse_functional(const std::string& name) {
    for (auto f : {Functional::cdf, Functional::quantile, Functional::lorenz, Functional::gini, Functional::mean,
                   Functional::variance, Functional::std_dev, Functional::q90_q10, Functional::q90_q50,
                   Functional::q50_q10}) {
        if (to_string(f) == name) {
            return f;
        }
    }
    throw ConfigError("unknown functional '" + name + "'");
}

bool is_scalar(Functional f) { return f != Functional::cdf && f != Functional::quantile && f != Functional::lorenz; }

FunctionalCurve apply_functional(Functional f, const StepDistribution& dist, const EvaluationGrids& grids) {
    auto scalar = [&](double v) { return FunctionalCurve{{0.0}, {v}, to_string(f)}; };
    switch (f) {
    case Functional::cdf:
        return cdf_curve(dist, grids.y_grid);
    case Functional::quantile:
        return quantile_function(dist, grids.u_grid);
    case Functional::lorenz:
        return lorenz_curve(dist, grids.u_grid);
    case Functional::gini:
        return scalar(gini(dist));
    case Functional::mean:
        return scalar(mean(dist));
    case Functional::variance:
        return scalar(variance(dist));
    case Functional::std_dev:
        return scalar(std::sqrt(variance(dist)));
    case Functional::q90_q10:
        return scalar(quantile(dist, 0.9) - quantile(dist, 0.1));
    case Functional::q90_q50:
        return scalar(quantile(dist, 0.9) - quantile(dist, 0.5));
    case Functional::q50_q10:
        return scalar(quantile(dist, 0.5) - quantile(dist, 0.1));
    }
    throw ConfigError("unhandled functional");
}

} // namespace cfdist
