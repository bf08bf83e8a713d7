#include "config.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <cfdist/error.hpp>

namespace cfdist::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ConfigError(path + ": " + message);
}

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

// Walks one JSON object, remembering which keys were consumed so that
// unknown (typically misspelled) keys can be rejected at the end.
class Section {
public:
    Section(const json& value, std::string path) : value_(value), path_(std::move(path)) {
        if (!value_.is_object()) {
            fail(path_.empty() ? "config" : path_, "expected an object");
        }
    }

    bool has(const std::string& key) const { return value_.contains(key); }

    const json& at(const std::string& key) {
        seen_.insert(key);
        if (!value_.contains(key)) {
            fail(join(path_, key), "required field is missing");
        }
        return value_.at(key);
    }

    std::string path(const std::string& key) const { return join(path_, key); }

    std::string string(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_string()) {
            fail(path(key), "expected a string");
        }
        return v.get<std::string>();
    }

    double number(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_number()) {
            fail(path(key), "expected a number");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            fail(path(key), "must be finite");
        }
        return d;
    }

    long long integer(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_number_integer()) {
            fail(path(key), "expected an integer");
        }
        return v.get<long long>();
    }

    std::uint64_t unsigned_integer(const std::string& key) {
        const auto& v = at(key);
        if (v.is_number_unsigned()) {
            return v.get<std::uint64_t>();
        }
        if (v.is_number_integer() && v.get<long long>() >= 0) {
            return static_cast<std::uint64_t>(v.get<long long>());
        }
        fail(path(key), "expected a nonnegative integer");
    }

    bool boolean(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_boolean()) {
            fail(path(key), "expected true or false");
        }
        return v.get<bool>();
    }

    std::vector<std::string> strings(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& s) { return s.is_string(); })) {
            fail(path(key), "expected an array of strings");
        }
        return v.get<std::vector<std::string>>();
    }

    std::vector<double> numbers(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& s) { return s.is_number(); })) {
            fail(path(key), "expected an array of numbers");
        }
        return v.get<std::vector<double>>();
    }

    Section child(const std::string& key) { return Section(at(key), path(key)); }

    void finish() const {
        for (const auto& item : value_.items()) {
            if (!seen_.contains(item.key())) {
                fail(join(path_, item.key()), "unknown field");
            }
        }
    }

private:
    const json& value_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class Parse>
auto parse_named(Section& s, const std::string& key, Parse parse) {
    const auto name = s.string(key);
    try {
        return parse(name);
    } catch (const ConfigError& e) {
        fail(s.path(key), e.what());
    }
}

int group_index(Section& s, const std::string& key) {
    const auto g = s.integer(key);
    if (g != 0 && g != 1) {
        fail(s.path(key), "group must be 0 or 1");
    }
    return static_cast<int>(g);
}

std::vector<Functional> functionals(Section& s, const std::string& key) {
    std::vector<Functional> out;
    for (const auto& name : s.strings(key)) {
        try {
            out.push_back(parse_functional(name));
        } catch (const ConfigError& e) {
            fail(s.path(key), e.what());
        }
    }
    if (out.empty()) {
        fail(s.path(key), "at least one functional is required");
    }
    return out;
}

void parse_input(Section s, RunConfig& config) {
    config.input_path = s.string("path");
    config.columns.outcome = s.string("outcome");
    config.columns.covariates = s.strings("covariates");
    config.columns.group = s.string("group");
    if (s.has("weight")) {
        config.columns.weight = s.string("weight");
    }
    if (s.has("group_order")) {
        config.columns.group_order = s.strings("group_order");
        if (config.columns.group_order.size() != 2) {
            fail(s.path("group_order"), "expected exactly two labels");
        }
    }
    if (s.has("union")) {
        config.union_column = s.string("union");
    }
    if (config.columns.covariates.empty()) {
        fail(s.path("covariates"), "at least one covariate is required");
    }
    s.finish();
}

void parse_estimator(Section s, RunConfig& config) {
    config.estimator.kind = parse_named(s, "kind", cfdist::parse_estimator);
    if (s.has("link")) {
        config.estimator.link = parse_named(s, "link", parse_link);
    }
    if (config.estimator.kind == ConditionalEstimator::duration_dr) {
        config.estimator.y0 = s.number("y0");
    }
    s.finish();
}

void parse_grids(Section s, RunConfig& config) {
    auto& g = config.grids;
    if (s.has("u_min")) g.u_min = s.number("u_min");
    if (s.has("u_max")) g.u_max = s.number("u_max");
    if (s.has("u_step")) g.u_step = s.number("u_step");
    if (s.has("y_points")) {
        const auto n = s.integer("y_points");
        if (n < 2) {
            fail(s.path("y_points"), "must be at least 2");
        }
        g.y_points = static_cast<std::size_t>(n);
    }
    if (s.has("u_grid")) g.u_grid = s.numbers("u_grid");
    if (s.has("y_grid")) g.y_grid = s.numbers("y_grid");
    if (!(g.u_step > 0.0)) {
        fail(s.path("u_step"), "must be positive");
    }
    if (!(g.u_min > 0.0 && g.u_min <= g.u_max && g.u_max < 1.0)) {
        fail(s.path("u_min"), "need 0 < u_min <= u_max < 1");
    }
    try {
        if (!g.u_grid.empty()) validate_grid(g.u_grid, true, "u_grid");
    } catch (const DomainError& e) {
        fail(s.path("u_grid"), e.what());
    }
    try {
        if (!g.y_grid.empty()) validate_grid(g.y_grid, false, "y_grid");
    } catch (const DomainError& e) {
        fail(s.path("y_grid"), e.what());
    }
    s.finish();
}

void parse_fit(Section s, RunConfig& config) {
    if (s.has("group")) config.fit_group = group_index(s, "group");
    if (s.has("max_iterations")) {
        const auto it = s.integer("max_iterations");
        if (it < 1) {
            fail(s.path("max_iterations"), "must be positive");
        }
        config.max_iterations = static_cast<int>(it);
    }
    if (s.has("tolerance")) {
        config.tolerance = s.number("tolerance");
        if (!(config.tolerance > 0.0)) {
            fail(s.path("tolerance"), "must be positive");
        }
    }
    s.finish();
}

CounterfactualConfig parse_counterfactual(Section s, std::size_t index) {
    CounterfactualConfig cf;
    cf.name = s.has("name") ? s.string("name") : "cf" + std::to_string(index);
    cf.conditional_group = group_index(s, "conditional_group");
    cf.covariate_group = group_index(s, "covariate_group");
    if (s.has("reference")) {
        auto r = s.child("reference");
        cf.reference_conditional = group_index(r, "conditional_group");
        cf.reference_covariate = group_index(r, "covariate_group");
        r.finish();
    }
    if (s.has("transform")) {
        auto t = s.child("transform");
        if (t.has("scale")) cf.scale = t.numbers("scale");
        if (t.has("shift")) cf.shift = t.numbers("shift");
        t.finish();
    }
    if (s.has("functionals")) cf.functionals = functionals(s, "functionals");
    if (cf.name.empty() || cf.name.find_first_of(",\n\"") != std::string::npos) {
        fail(s.path("name"), "must be nonempty and free of commas, quotes and newlines");
    }
    s.finish();
    return cf;
}

void parse_bootstrap(Section s, RunConfig& config) {
    auto& b = config.bootstrap;
    b.enabled = true;
    if (s.has("scheme")) b.plan.scheme = parse_named(s, "scheme", parse_weight_scheme);
    if (s.has("replications")) {
        const auto r = s.integer("replications");
        if (r < 1) {
            fail(s.path("replications"), "must be positive");
        }
        b.plan.replications = static_cast<std::size_t>(r);
    }
    if (s.has("k")) b.plan.k = static_cast<std::size_t>(s.unsigned_integer("k"));
    if (s.has("wild_law")) {
        const auto law = s.string("wild_law");
        if (law == "exponential") {
            b.plan.wild_law = WildLaw::exponential;
        } else if (law == "poisson") {
            b.plan.wild_law = WildLaw::poisson;
        } else {
            fail(s.path("wild_law"), "expected exponential or poisson");
        }
    }
    if (s.has("level")) b.level = s.number("level");
    if (!(b.level > 0.5 && b.level < 1.0)) {
        fail(s.path("level"), "must lie in (0.5, 1)");
    }
    if (b.plan.replications < 20) {
        fail(s.path("replications"), "bands need at least 20 replications");
    }
    s.finish();
}

void parse_decomposition(Section s, RunConfig& config) {
    auto& d = config.decomposition;
    d.present = true;
    if (s.has("strategy")) {
        const auto name = s.string("strategy");
        if (name == "ratio_scaling") {
            d.policy.strategy = MinimumWageStrategy::ratio_scaling;
        } else if (name == "censoring") {
            d.policy.strategy = MinimumWageStrategy::censoring;
        } else {
            fail(s.path("strategy"), "expected ratio_scaling or censoring");
        }
    }
    d.policy.m_old = s.number("m_old");
    d.policy.m_new = s.number("m_new");
    if (s.has("order")) {
        const auto order = s.string("order");
        if (order == "forward") {
            d.order = DecompositionOrder::forward;
        } else if (order == "reverse") {
            d.order = DecompositionOrder::reverse;
        } else {
            fail(s.path("order"), "expected forward or reverse");
        }
    }
    if (s.has("functionals")) d.functionals = functionals(s, "functionals");
    if (s.has("union_covariates")) d.union_covariates = s.strings("union_covariates");
    if (s.has("smooth")) d.smooth = s.boolean("smooth");
    if (s.has("bandwidth")) {
        d.bandwidth = s.number("bandwidth");
        if (!(d.bandwidth > 0.0)) {
            fail(s.path("bandwidth"), "must be positive");
        }
    }
    s.finish();
}

} // namespace

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig config;
    Section root(doc, "");
    parse_input(root.child("input"), config);
    parse_estimator(root.child("estimator"), config);
    if (root.has("grids")) parse_grids(root.child("grids"), config);
    if (root.has("fit")) parse_fit(root.child("fit"), config);
    if (root.has("counterfactuals")) {
        const auto& list = root.at("counterfactuals");
        if (!list.is_array()) {
            fail("counterfactuals", "expected an array");
        }
        std::set<std::string> names;
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto path = "counterfactuals[" + std::to_string(i) + "]";
            config.counterfactuals.push_back(parse_counterfactual(Section(list[i], path), i));
            if (!names.insert(config.counterfactuals.back().name).second) {
                fail(path + ".name", "duplicate counterfactual name");
            }
        }
    }
    if (root.has("bootstrap")) parse_bootstrap(root.child("bootstrap"), config);
    if (root.has("decomposition")) parse_decomposition(root.child("decomposition"), config);
    if (root.has("output")) {
        auto out = root.child("output");
        if (out.has("dir")) config.output_dir = out.string("dir");
        if (out.has("prefix")) config.prefix = out.string("prefix");
        out.finish();
    }
    if (root.has("seed")) config.seed = root.unsigned_integer("seed");
    root.finish();
    return config;
}

void check_columns(const RunConfig& config, const GroupedDataset& dataset) {
    const auto& names = dataset.covariate_names();
    const auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
    if (config.decomposition.present && !has(config.union_column)) {
        fail("input.union", "column '" + config.union_column + "' is not among the covariates");
    }
    for (const auto& n : config.decomposition.union_covariates) {
        if (!has(n)) {
            fail("decomposition.union_covariates", "column '" + n + "' is not among the covariates");
        }
    }
    for (std::size_t i = 0; i < config.counterfactuals.size(); ++i) {
        const auto& cf = config.counterfactuals[i];
        const auto path = "counterfactuals[" + std::to_string(i) + "].transform";
        if ((!cf.scale.empty() && cf.scale.size() != names.size()) ||
            (!cf.shift.empty() && cf.shift.size() != names.size())) {
            fail(path, "scale and shift need one entry per covariate");
        }
    }
}

EvaluationGrids build_grids(const RunConfig& config, const GroupedDataset& dataset) {
    EvaluationGrids grids;
    const auto& g = config.grids;
    grids.u_grid = g.u_grid.empty() ? default_u_grid(g.u_min, g.u_max, g.u_step) : g.u_grid;
    grids.y_grid = g.y_grid.empty() ? default_y_grid(dataset, g.y_points) : g.y_grid;
    return grids;
}

std::string config_hash(const std::string& text) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

} // namespace cfdist::cli
