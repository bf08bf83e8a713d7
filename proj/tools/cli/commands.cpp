#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include <cfdist/error.hpp>
#include <cfdist/serialization.hpp>

#ifndef CFDIST_VERSION
#define CFDIST_VERSION "unknown"
#endif

namespace cfdist::cli {

namespace {

using nlohmann::json;

struct Context {
    RunConfig config;
    Metadata meta;
    unsigned threads = 1;
    std::filesystem::path out_dir;
    std::vector<std::string> written;

    std::filesystem::path file(const std::string& suffix) const {
        const auto prefix = config.prefix.empty() ? meta.command : config.prefix;
        return out_dir / (prefix + suffix);
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(Context& ctx, const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigError("output: cannot write '" + path.string() + "'");
    }
    out << text;
    if (!out) {
        throw ConfigError("output: write failed for '" + path.string() + "'");
    }
    ctx.written.push_back(path.string());
}

void write_json(Context& ctx, const std::string& suffix, json body) {
    body["metadata"] = to_json(ctx.meta);
    write_text(ctx, ctx.file(suffix), dump_json(body) + "\n");
}

template <class Writer>
void write_csv(Context& ctx, const std::string& suffix, Writer writer) {
    std::ostringstream out;
    write_metadata_comments(out, ctx.meta);
    writer(out);
    write_text(ctx, ctx.file(suffix), out.str());
}

FitOptions fit_options(const RunConfig& config, const GroupedDataset& dataset, unsigned threads) {
    FitOptions options;
    options.covariate_names = dataset.covariate_names();
    options.threads = threads;
    options.max_iterations = config.max_iterations;
    options.tolerance = config.tolerance;
    return options;
}

BootstrapPlan bootstrap_plan(const Context& ctx) {
    if (!ctx.config.seed) {
        throw ConfigError("seed: required for any bootstrap run");
    }
    BootstrapPlan plan = ctx.config.bootstrap.plan;
    plan.master_seed = *ctx.config.seed;
    return plan;
}

// ---- fit ----------------------------------------------------------------

json status_summary(const std::vector<GridPointStatus>& status, const std::vector<double>& y_grid) {
    json flagged = json::array();
    for (std::size_t k = 0; k < status.size(); ++k) {
        if (status[k] != GridPointStatus::ok) {
            flagged.push_back({{"index", k}, {"y", y_grid[k]}, {"status", to_string(status[k])}});
        }
    }
    return flagged;
}

std::size_t outside_support(const SupportBox& box, const GroupSample& sample) {
    std::size_t count = 0;
    std::vector<double> x(sample.dim());
    for (std::size_t i = 0; i < sample.size(); ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] = sample.covariates()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        count += box.contains(x) ? 0 : 1;
    }
    return count;
}

void cmd_fit(Context& ctx, const GroupedDataset& dataset, const EvaluationGrids& grids) {
    const auto& config = ctx.config;
    const auto& sample = dataset.group(config.fit_group);
    const auto& other = dataset.group(1 - config.fit_group);
    const auto options = fit_options(config, dataset, ctx.threads);

    json model;
    json report{{"group", config.fit_group},
                {"group_label", dataset.group_labels()[static_cast<std::size_t>(config.fit_group)]},
                {"estimator", to_string(config.estimator.kind)},
                {"n", sample.size()}};
    SupportBox support;
    switch (config.estimator.kind) {
    case ConditionalEstimator::location:
    case ConditionalEstimator::quantile_regression: {
        const auto fit = config.estimator.kind == ConditionalEstimator::location
                             ? fit_location_model(sample, grids.u_grid, options)
                             : fit_quantile_regression(sample, grids.u_grid, options);
        model = to_json(fit);
        support = fit.support;
        report["degenerate_points"] = json::array();
        report["separated_points"] = json::array();
        break;
    }
    case ConditionalEstimator::distribution_regression:
    case ConditionalEstimator::duration_dr: {
        const auto fit = config.estimator.kind == ConditionalEstimator::distribution_regression
                             ? fit_distribution_regression(sample, grids.y_grid, config.estimator.link, options)
                             : fit_duration_dr(sample, grids.y_grid, config.estimator.link, config.estimator.y0,
                                               options);
        model = to_json(fit);
        support = fit.support;
        json degenerate = json::array();
        json separated = json::array();
        for (auto& item : status_summary(fit.status, fit.y_grid)) {
            (item["status"] == "separated" ? separated : degenerate).push_back(std::move(item));
        }
        report["degenerate_points"] = std::move(degenerate);
        report["separated_points"] = std::move(separated);
        break;
    }
    }
    report["extrapolation"] = {{"other_group_points_outside_support", outside_support(support, other)},
                               {"other_group_size", other.size()}};
    write_json(ctx, ".model.json", {{"model", std::move(model)}});
    write_json(ctx, ".report.json", {{"fit", std::move(report)}});
}

// ---- counterfactual -----------------------------------------------------

struct NamedCurve {
    std::string name;
    FunctionalCurve curve;
    bool effect = false;
};

struct CounterfactualOutput {
    std::vector<NamedCurve> curves;
    json extrapolation = json::array();
};

CovariateTransform transform_for(const CounterfactualConfig& cf, std::size_t p) {
    if (cf.scale.empty() && cf.shift.empty()) {
        return {};
    }
    auto scale = cf.scale.empty() ? std::vector<double>(p, 1.0) : cf.scale;
    auto shift = cf.shift.empty() ? std::vector<double>(p, 0.0) : cf.shift;
    return affine_transform(std::move(scale), std::move(shift));
}

FunctionalCurve minus(const FunctionalCurve& a, const FunctionalCurve& b) {
    FunctionalCurve d{a.grid, a.values, a.label};
    for (std::size_t t = 0; t < d.values.size(); ++t) {
        d.values[t] -= b.values[t];
    }
    return d;
}

CounterfactualOutput counterfactual_curves(const RunConfig& config, const GroupedDataset& dataset,
                                           const EvaluationGrids& grids, unsigned threads) {
    std::map<int, std::shared_ptr<const ConditionalDistributionModel>> models;
    const auto options = fit_options(config, dataset, threads);
    const auto model_for = [&](int g) {
        auto& slot = models[g];
        if (!slot) {
            slot = fit_conditional_distribution(dataset.group(g), config.estimator, grids, options);
        }
        return slot;
    };

    CounterfactualOutput out;
    for (const auto& cf : config.counterfactuals) {
        const int ref_cond = cf.reference_conditional < 0 ? cf.conditional_group : cf.reference_conditional;
        const int ref_cov = cf.reference_covariate < 0 ? cf.conditional_group : cf.reference_covariate;
        const auto counterfactual = marginal_cdf(*model_for(cf.conditional_group), dataset.group(cf.covariate_group),
                                                 transform_for(cf, dataset.dim()));
        const auto reference = marginal_cdf(*model_for(ref_cond), dataset.group(ref_cov));
        out.extrapolation.push_back({{"counterfactual", cf.name},
                                     {"points_outside_support", counterfactual.extrapolated},
                                     {"share_outside_support", counterfactual.extrapolated_share}});
        for (const auto f : cf.functionals) {
            const auto name = to_string(f);
            const auto c = apply_functional(f, counterfactual.distribution, grids);
            const auto r = apply_functional(f, reference.distribution, grids);
            out.curves.push_back({cf.name + ".counterfactual." + name, c, false});
            out.curves.push_back({cf.name + ".reference." + name, r, false});
            out.curves.push_back({cf.name + ".effect." + name, minus(c, r), true});
        }
    }
    return out;
}

std::vector<double> flatten_curves(const std::vector<NamedCurve>& curves) {
    std::vector<double> flat;
    for (const auto& c : curves) {
        flat.insert(flat.end(), c.curve.values.begin(), c.curve.values.end());
    }
    return flat;
}

BootstrapDraws counterfactual_draws(const Context& ctx, const GroupedDataset& dataset, const EvaluationGrids& grids) {
    const auto plan = bootstrap_plan(ctx);
    const auto& config = ctx.config;
    const CurveStatistic statistic = [&](const GroupedDataset& d) {
        return flatten_curves(counterfactual_curves(config, d, grids, 1).curves);
    };
    return bootstrap_curves(dataset, statistic, plan, ctx.threads);
}

json bootstrap_json(const BootstrapDraws& draws, const BootstrapPlan& plan, double level) {
    json failures = json::array();
    for (std::size_t i = 0; i < draws.failed.size(); ++i) {
        failures.push_back({{"replication", draws.failed[i]}, {"message", draws.failure_messages[i]}});
    }
    return {{"scheme", to_string(plan.scheme)},
            {"replications", plan.replications},
            {"successful", draws.replications.size()},
            {"failures", std::move(failures)},
            {"level", level},
            {"deviation_scale", draws.deviation_scale}};
}

void cmd_counterfactual(Context& ctx, const GroupedDataset& dataset, const EvaluationGrids& grids) {
    const auto& config = ctx.config;
    if (config.counterfactuals.empty()) {
        throw ConfigError("counterfactuals: at least one counterfactual is required");
    }
    const auto estimate = counterfactual_curves(config, dataset, grids, ctx.threads);

    std::vector<CurveRow> rows;
    json curves = json::array();
    json tests = json::array();
    json bootstrap;
    if (config.bootstrap.enabled) {
        const auto plan = bootstrap_plan(ctx);
        const auto draws = counterfactual_draws(ctx, dataset, grids);
        Eigen::Index offset = 0;
        for (const auto& c : estimate.curves) {
            const auto len = static_cast<Eigen::Index>(c.curve.values.size());
            const Eigen::MatrixXd block = draws.draws.middleCols(offset, len);
            offset += len;
            const auto band = uniform_band(c.curve, block, config.bootstrap.level, draws.deviation_scale);
            const auto part = curve_rows(c.name, c.curve, band);
            rows.insert(rows.end(), part.begin(), part.end());
            curves.push_back({{"name", c.name}, {"critical_value", band.critical_value}});
            if (c.effect && c.curve.values.size() > 1) {
                for (auto null : {KsNull::no_effect, KsNull::constant_effect, KsNull::positive_effect}) {
                    auto t = to_json(ks_test(c.curve, block, null, draws.deviation_scale));
                    t["curve"] = c.name;
                    tests.push_back(std::move(t));
                }
            }
        }
        bootstrap = bootstrap_json(draws, plan, config.bootstrap.level);
    } else {
        for (const auto& c : estimate.curves) {
            const auto part = curve_rows(c.name, c.curve);
            rows.insert(rows.end(), part.begin(), part.end());
            curves.push_back({{"name", c.name}});
        }
    }
    write_csv(ctx, ".curves.csv", [&](std::ostream& out) { write_curves_csv(out, rows); });
    json report{{"curves", std::move(curves)}, {"tests", std::move(tests)}, {"extrapolation", estimate.extrapolation}};
    if (!bootstrap.is_null()) {
        report["bootstrap"] = std::move(bootstrap);
    }
    write_json(ctx, ".report.json", std::move(report));
}

// ---- decompose ----------------------------------------------------------

DecompositionConfig decomposition_config(const RunConfig& config, const GroupedDataset& dataset,
                                         const EvaluationGrids& grids, unsigned threads) {
    if (!config.decomposition.present) {
        throw ConfigError("decomposition: block is required for this command");
    }
    DecompositionConfig d;
    d.estimator = config.estimator;
    d.policy = config.decomposition.policy;
    d.functionals = config.decomposition.functionals;
    d.order = config.decomposition.order;
    d.union_column = config.union_column;
    d.union_covariates = config.decomposition.union_covariates;
    d.grids = grids;
    d.fit = fit_options(config, dataset, threads);
    return d;
}

void cmd_decompose(Context& ctx, const GroupedDataset& dataset, const EvaluationGrids& grids) {
    const auto& config = ctx.config;
    const auto dconfig = decomposition_config(config, dataset, grids, ctx.threads);
    auto result = decompose(dataset, dconfig);
    json bootstrap;
    if (config.bootstrap.enabled) {
        const auto plan = bootstrap_plan(ctx);
        const auto draws = attach_bands(result, dataset, dconfig, plan, config.bootstrap.level, ctx.threads);
        bootstrap = bootstrap_json(draws, plan, config.bootstrap.level);
    }

    std::vector<CurveRow> rows;
    std::vector<CurveRow> smoothed;
    for (const auto& report : result.reports) {
        const auto f = to_string(report.functional);
        auto add = [&](const std::string& name, const FunctionalCurve& curve, const std::optional<UniformBand>& band) {
            const auto part = curve_rows(f + "." + name, curve, band);
            rows.insert(rows.end(), part.begin(), part.end());
            if (config.decomposition.smooth && report.functional == Functional::quantile) {
                const auto s = curve_rows(f + "." + name, gaussian_smooth(curve, config.decomposition.bandwidth));
                smoothed.insert(smoothed.end(), s.begin(), s.end());
            }
        };
        add("total", report.total, report.total_band);
        for (const auto& c : report.components) {
            add(c.name, c.curve, c.band);
        }
    }
    write_csv(ctx, ".curves.csv", [&](std::ostream& out) { write_curves_csv(out, rows); });
    write_csv(ctx, ".decomposition.csv", [&](std::ostream& out) { write_decomposition_csv(out, result); });
    if (!smoothed.empty()) {
        write_csv(ctx, ".smoothed.csv", [&](std::ostream& out) { write_curves_csv(out, smoothed); });
    }
    json report{{"decomposition", to_json(result)}};
    if (!bootstrap.is_null()) {
        report["bootstrap"] = std::move(bootstrap);
    }
    write_json(ctx, ".report.json", std::move(report));
}

// ---- bands-audit --------------------------------------------------------

void cmd_bands_audit(Context& ctx, const GroupedDataset& dataset, const EvaluationGrids& grids) {
    const auto& config = ctx.config;
    if (!config.bootstrap.enabled) {
        throw ConfigError("bootstrap: block is required for bands-audit");
    }
    const auto plan = bootstrap_plan(ctx);
    BootstrapDraws draws;
    json layout = json::array();
    std::size_t column = 0;
    if (!config.counterfactuals.empty()) {
        for (const auto& c : counterfactual_curves(config, dataset, grids, ctx.threads).curves) {
            layout.push_back({{"name", c.name}, {"first_column", column}, {"length", c.curve.values.size()}});
            column += c.curve.values.size();
        }
        draws = counterfactual_draws(ctx, dataset, grids);
    } else {
        const auto dconfig = decomposition_config(config, dataset, grids, ctx.threads);
        const auto result = decompose(dataset, dconfig);
        for (const auto& report : result.reports) {
            const auto f = to_string(report.functional);
            layout.push_back({{"name", f + ".total"}, {"first_column", column}, {"length", report.total.values.size()}});
            column += report.total.values.size();
            for (const auto& c : report.components) {
                layout.push_back({{"name", f + "." + c.name}, {"first_column", column}, {"length", c.curve.values.size()}});
                column += c.curve.values.size();
            }
        }
        auto inner = dconfig;
        inner.fit.threads = 1;
        const CurveStatistic statistic = [&](const GroupedDataset& d) { return flatten(decompose(d, inner)); };
        draws = bootstrap_curves(dataset, statistic, plan, ctx.threads);
    }
    write_csv(ctx, ".draws.csv", [&](std::ostream& out) { write_draws_csv(out, draws); });
    write_json(ctx, ".report.json",
               {{"layout", std::move(layout)}, {"bootstrap", bootstrap_json(draws, plan, config.bootstrap.level)}});
}

} // namespace

std::vector<std::string> execute(const std::string& command, const std::string& config_text,
                                 const Invocation& overrides) {
    static const std::map<std::string, void (*)(Context&, const GroupedDataset&, const EvaluationGrids&)> commands{
        {"fit", cmd_fit},
        {"counterfactual", cmd_counterfactual},
        {"decompose", cmd_decompose},
        {"bands-audit", cmd_bands_audit},
    };
    const auto it = commands.find(command);
    if (it == commands.end()) {
        throw ConfigError("unknown command '" + command + "'");
    }
    Context ctx;
    ctx.config = parse_config(config_text);
    if (overrides.seed) {
        ctx.config.seed = overrides.seed;
    }
    if (overrides.output_dir) {
        ctx.config.output_dir = *overrides.output_dir;
    }
    ctx.threads = std::max(1u, overrides.threads);
    ctx.meta.version = CFDIST_VERSION;
    ctx.meta.seed = ctx.config.seed.value_or(0);
    ctx.meta.config_hash = config_hash(config_text);
    ctx.meta.command = command;

    const auto dataset = load_csv(ctx.config.input_path, ctx.config.columns);
    check_columns(ctx.config, dataset);
    const auto grids = build_grids(ctx.config, dataset);

    ctx.out_dir = ctx.config.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(ctx.out_dir, ec);
    if (ec) {
        throw ConfigError("output.dir: cannot create '" + ctx.out_dir.string() + "': " + ec.message());
    }
    it->second(ctx, dataset, grids);
    return ctx.written;
}

int exit_code_for(const std::exception& error) {
    if (dynamic_cast<const ConfigError*>(&error)) {
        return 2;
    }
    if (dynamic_cast<const DataError*>(&error) || dynamic_cast<const DomainError*>(&error)) {
        return 3;
    }
    if (dynamic_cast<const NumericalError*>(&error)) {
        return 4;
    }
    return 1;
}

int run(const Invocation& invocation, std::ostream& log) {
    try {
        const auto text = read_file(invocation.config_path);
        for (const auto& path : execute(invocation.command, text, invocation)) {
            log << "wrote " << path << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        const char* kind = code == 2 ? "config error" : code == 3 ? "data error" : code == 4 ? "numerical error"
                                                                                              : "error";
        log << "cfdist: " << kind << ": " << e.what() << '\n';
        return code;
    }
}

} // namespace cfdist::cli
