#include "cfdist/serialization.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "cfdist/error.hpp"

namespace cfdist {

using nlohmann::json;

std::string format_double(double value) {
    std::array<char, 32> buf{};
    const int len = std::snprintf(buf.data(), buf.size(), "%.17g", value);
    return std::string(buf.data(), static_cast<std::size_t>(len));
}

namespace {

void write_value(std::ostringstream& out, const json& value, int indent, int depth) {
    const auto newline = [&](int level) {
        if (indent >= 0) {
            out << '\n' << std::string(static_cast<std::size_t>(indent * level), ' ');
        }
    };
    switch (value.type()) {
    case json::value_t::object: {
        if (value.empty()) {
            out << "{}";
            return;
        }
        out << '{';
        bool first = true;
        for (const auto& [key, item] : value.items()) {
            if (!first) {
                out << ',';
            }
            first = false;
            newline(depth + 1);
            out << json(key).dump() << (indent >= 0 ? ": " : ":");
            write_value(out, item, indent, depth + 1);
        }
        newline(depth);
        out << '}';
        return;
    }
    case json::value_t::array: {
        if (value.empty()) {
            out << "[]";
            return;
        }
        // Arrays of scalars stay on one line; long numeric vectors would
        // otherwise dominate the file.
        const bool flat = std::all_of(value.begin(), value.end(), [](const json& v) { return v.is_primitive(); });
        out << '[';
        bool first = true;
        for (const auto& item : value) {
            if (!first) {
                out << (flat && indent >= 0 ? ", " : ",");
            }
            first = false;
            if (!flat) {
                newline(depth + 1);
            }
            write_value(out, item, indent, depth + 1);
        }
        if (!flat) {
            newline(depth);
        }
        out << ']';
        return;
    }
    case json::value_t::number_float: {
        const double v = value.get<double>();
        if (!std::isfinite(v)) {
            throw NumericalError("non-finite value in serialized output");
        }
        out << format_double(v);
        return;
    }
    default:
        out << value.dump();
        return;
    }
}

template <class Enum, std::size_t N>
Enum enum_from(const json& j, const std::array<Enum, N>& values, const char* what) {
    const auto name = j.get<std::string>();
    for (Enum e : values) {
        if (to_string(e) == name) {
            return e;
        }
    }
    throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
}

constexpr std::array kQuantileKinds{QuantileModelKind::location, QuantileModelKind::quantile_regression};
constexpr std::array kDistributionKinds{DistributionModelKind::distribution_regression,
                                        DistributionModelKind::duration_dr,
                                        DistributionModelKind::derived_from_quantiles,
                                        DistributionModelKind::minimum_wage};
constexpr std::array kStatuses{GridPointStatus::ok, GridPointStatus::degenerate_zero, GridPointStatus::degenerate_one,
                               GridPointStatus::separated, GridPointStatus::bracket_failure};
constexpr std::array kStrategies{MinimumWageStrategy::ratio_scaling, MinimumWageStrategy::censoring};

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw ConfigError("ragged coefficient matrix in model JSON");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

json vector_json(const Eigen::VectorXd& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json support_json(const SupportBox& box) {
    return {{"lower", box.lower}, {"upper", box.upper}};
}

SupportBox support_from(const json& j) {
    return {j.at("lower").get<std::vector<double>>(), j.at("upper").get<std::vector<double>>()};
}

std::string optional_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

} // namespace

std::string dump_json(const json& value, int indent) {
    std::ostringstream out;
    write_value(out, value, indent, 0);
    return out.str();
}

json to_json(const Metadata& meta) {
    return {{"tool", meta.tool},
            {"version", meta.version},
            {"seed", meta.seed},
            {"config_hash", meta.config_hash},
            {"command", meta.command}};
}

void write_metadata_comments(std::ostream& out, const Metadata& meta) {
    out << "# tool: " << meta.tool << '\n'
        << "# version: " << meta.version << '\n'
        << "# seed: " << meta.seed << '\n'
        << "# config_hash: " << meta.config_hash << '\n'
        << "# command: " << meta.command << '\n';
}

json to_json(const ConditionalQuantileModel& model) {
    json j{{"kind", to_string(model.kind)},
           {"u_grid", model.u_grid},
           {"coefficients", matrix_json(model.coefficients)},
           {"covariate_names", model.covariate_names},
           {"support", support_json(model.support)}};
    if (model.kind == QuantileModelKind::location) {
        j["slope"] = vector_json(model.slope);
        j["alpha"] = model.alpha;
    }
    return j;
}

ConditionalQuantileModel quantile_model_from_json(const json& j) {
    ConditionalQuantileModel model;
    model.kind = enum_from(j.at("kind"), kQuantileKinds, "quantile model kind");
    model.u_grid = j.at("u_grid").get<std::vector<double>>();
    model.coefficients = matrix_from(j.at("coefficients"));
    model.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    model.support = support_from(j.at("support"));
    if (model.kind == QuantileModelKind::location) {
        model.slope = vector_from(j.at("slope"));
        model.alpha = j.at("alpha").get<std::vector<double>>();
    }
    if (static_cast<std::size_t>(model.coefficients.rows()) != model.u_grid.size() ||
        static_cast<std::size_t>(model.coefficients.cols()) != model.dim() + 1) {
        throw ConfigError("quantile model JSON: coefficient shape does not match grid and covariates");
    }
    return model;
}

json to_json(const ConditionalDistributionModel& model) {
    json status = json::array();
    for (auto s : model.status) {
        status.push_back(to_string(s));
    }
    json j{{"kind", to_string(model.kind)},
           {"link", to_string(model.link)},
           {"y_grid", model.y_grid},
           {"status", std::move(status)},
           {"rearranged", model.rearranged},
           {"covariate_names", model.covariate_names},
           {"support", support_json(model.support)}};
    switch (model.kind) {
    case DistributionModelKind::distribution_regression:
        j["coefficients"] = matrix_json(model.coefficients);
        break;
    case DistributionModelKind::duration_dr:
        j["slope"] = vector_json(model.slope);
        j["alpha"] = model.alpha;
        j["anchor"] = model.anchor;
        break;
    case DistributionModelKind::derived_from_quantiles:
        j["source"] = to_json(*model.source);
        break;
    case DistributionModelKind::minimum_wage:
        j["structure"] = to_json(*model.structure);
        j["minimum_source"] = to_json(*model.minimum_source);
        j["rule"] = {{"strategy", to_string(model.rule.strategy)},
                     {"minimum", model.rule.minimum},
                     {"threshold_index", model.rule.threshold_index}};
        break;
    }
    return j;
}

ConditionalDistributionModel distribution_model_from_json(const json& j) {
    ConditionalDistributionModel model;
    model.kind = enum_from(j.at("kind"), kDistributionKinds, "distribution model kind");
    model.link = parse_link(j.at("link").get<std::string>());
    model.y_grid = j.at("y_grid").get<std::vector<double>>();
    for (const auto& s : j.at("status")) {
        model.status.push_back(enum_from(s, kStatuses, "grid point status"));
    }
    model.rearranged = j.at("rearranged").get<bool>();
    model.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    model.support = support_from(j.at("support"));
    if (model.status.size() != model.y_grid.size()) {
        throw ConfigError("distribution model JSON: status length does not match y_grid");
    }
    switch (model.kind) {
    case DistributionModelKind::distribution_regression:
        model.coefficients = matrix_from(j.at("coefficients"));
        if (static_cast<std::size_t>(model.coefficients.rows()) != model.y_grid.size() ||
            static_cast<std::size_t>(model.coefficients.cols()) != model.dim() + 1) {
            throw ConfigError("distribution model JSON: coefficient shape does not match y_grid and covariates");
        }
        break;
    case DistributionModelKind::duration_dr:
        model.slope = vector_from(j.at("slope"));
        model.alpha = j.at("alpha").get<std::vector<double>>();
        model.anchor = j.at("anchor").get<double>();
        if (model.alpha.size() != model.y_grid.size() ||
            static_cast<std::size_t>(model.slope.size()) != model.dim() + 1) {
            throw ConfigError("distribution model JSON: duration alpha/slope do not match y_grid and covariates");
        }
        model.coefficients.resize(static_cast<Eigen::Index>(model.y_grid.size()), model.slope.size());
        for (std::size_t k = 0; k < model.alpha.size(); ++k) {
            model.coefficients.row(static_cast<Eigen::Index>(k)) = model.slope.transpose();
            model.coefficients(static_cast<Eigen::Index>(k), 0) += model.alpha[k];
        }
        break;
    case DistributionModelKind::derived_from_quantiles:
        model.source = std::make_shared<const ConditionalQuantileModel>(quantile_model_from_json(j.at("source")));
        if (model.source->dim() != model.dim()) {
            throw ConfigError("distribution model JSON: source covariates do not match");
        }
        break;
    case DistributionModelKind::minimum_wage: {
        model.structure =
            std::make_shared<const ConditionalDistributionModel>(distribution_model_from_json(j.at("structure")));
        model.minimum_source =
            std::make_shared<const ConditionalDistributionModel>(distribution_model_from_json(j.at("minimum_source")));
        const auto& rule = j.at("rule");
        model.rule.strategy = enum_from(rule.at("strategy"), kStrategies, "minimum-wage strategy");
        model.rule.minimum = rule.at("minimum").get<double>();
        model.rule.threshold_index = rule.at("threshold_index").get<std::size_t>();
        if (model.rule.threshold_index >= model.y_grid.size() || model.structure->y_grid != model.y_grid ||
            model.minimum_source->y_grid != model.y_grid) {
            throw ConfigError("distribution model JSON: minimum-wage parts do not share the y grid");
        }
        break;
    }
    }
    return model;
}

json to_json(const StepDistribution& dist) {
    return {{"y_grid", dist.y_grid}, {"cdf", dist.cdf_values}};
}

json to_json(const FunctionalCurve& curve) {
    return {{"label", curve.label}, {"grid", curve.grid}, {"values", curve.values}};
}

json to_json(const UniformBand& band) {
    return {{"level", band.level},
            {"critical_value", band.critical_value},
            {"lower", band.lower.values},
            {"upper", band.upper.values},
            {"se", band.pointwise_se.values}};
}

json to_json(const KsTestReport& report) {
    return {{"null", to_string(report.null)},
            {"statistic", report.statistic},
            {"p_value", report.p_value},
            {"replications", report.replications}};
}

json to_json(const DecompositionReport& report) {
    json total = to_json(report.total);
    if (report.total_band) {
        total["band"] = to_json(*report.total_band);
    }
    json components = json::array();
    for (const auto& c : report.components) {
        json item = to_json(c.curve);
        item["name"] = c.name;
        if (c.band) {
            item["band"] = to_json(*c.band);
        }
        components.push_back(std::move(item));
    }
    return {{"functional", to_string(report.functional)},
            {"order", report.order == DecompositionOrder::forward ? "forward" : "reverse"},
            {"total", std::move(total)},
            {"components", std::move(components)}};
}

json to_json(const DecompositionResult& result) {
    json reports = json::array();
    for (const auto& r : result.reports) {
        reports.push_back(to_json(r));
    }
    const auto& d = result.diagnostics;
    json diagnostics{{"threshold_index", d.threshold.index},
                     {"threshold_grid_value", d.threshold.grid_value},
                     {"threshold_exact", d.threshold.exact},
                     {"small_denominators", d.small_denominators},
                     {"flagged_points_base", d.flagged_points_base},
                     {"flagged_points_recent", d.flagged_points_recent},
                     {"union_model_status", to_string(d.union_status)}};
    return {{"chain", result.chain_labels}, {"reports", std::move(reports)}, {"diagnostics", std::move(diagnostics)}};
}

std::vector<CurveRow> curve_rows(const std::string& functional, const FunctionalCurve& curve,
                                 const std::optional<UniformBand>& band) {
    std::vector<CurveRow> rows;
    rows.reserve(curve.grid.size());
    for (std::size_t t = 0; t < curve.grid.size(); ++t) {
        CurveRow row{functional, curve.grid[t], curve.values[t], {}, {}, {}};
        if (band) {
            row.lower = band->lower.values[t];
            row.upper = band->upper.values[t];
            row.se = band->pointwise_se.values[t];
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_curves_csv(std::ostream& out, const std::vector<CurveRow>& rows) {
    out << "functional,grid,estimate,lower,upper,se\n";
    for (const auto& r : rows) {
        out << r.functional << ',' << format_double(r.grid) << ',' << format_double(r.estimate) << ','
            << optional_cell(r.lower) << ',' << optional_cell(r.upper) << ',' << optional_cell(r.se) << '\n';
    }
}

void write_decomposition_csv(std::ostream& out, const DecompositionResult& result) {
    out << "functional,component,grid,estimate,lower,upper\n";
    const auto emit = [&](const std::string& f, const std::string& name, const FunctionalCurve& curve,
                          const std::optional<UniformBand>& band) {
        for (std::size_t t = 0; t < curve.grid.size(); ++t) {
            out << f << ',' << name << ',' << format_double(curve.grid[t]) << ',' << format_double(curve.values[t])
                << ',';
            if (band) {
                out << format_double(band->lower.values[t]) << ',' << format_double(band->upper.values[t]);
            } else {
                out << ',';
            }
            out << '\n';
        }
    };
    for (const auto& report : result.reports) {
        const auto f = to_string(report.functional);
        emit(f, "total", report.total, report.total_band);
        for (const auto& c : report.components) {
            emit(f, c.name, c.curve, c.band);
        }
    }
}

void write_draws_csv(std::ostream& out, const BootstrapDraws& draws) {
    out << "replication";
    for (Eigen::Index c = 0; c < draws.draws.cols(); ++c) {
        out << ",v" << c;
    }
    out << '\n';
    for (Eigen::Index r = 0; r < draws.draws.rows(); ++r) {
        out << draws.replications[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < draws.draws.cols(); ++c) {
            out << ',' << format_double(draws.draws(r, c));
        }
        out << '\n';
    }
}

} // namespace cfdist
