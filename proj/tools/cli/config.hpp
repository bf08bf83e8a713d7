#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <cfdist/counterfactual.hpp>
#include <cfdist/data.hpp>
#include <cfdist/decomposition.hpp>
#include <cfdist/inference.hpp>

namespace cfdist::cli {

struct GridConfig {
    double u_min = 0.02;
    double u_max = 0.98;
    double u_step = 0.001;
    std::size_t y_points = 200;
    /// Explicit grids override the generated ones.
    std::vector<double> u_grid;
    std::vector<double> y_grid;
};

struct CounterfactualConfig {
    std::string name;
    int conditional_group = 0;
    int covariate_group = 0;
    /// Reference distribution; defaults to the observed conditional group.
    int reference_conditional = -1;
    int reference_covariate = -1;
    std::vector<double> scale;
    std::vector<double> shift;
    std::vector<Functional> functionals{Functional::quantile};
};

struct BootstrapConfig {
    BootstrapPlan plan;
    double level = 0.9;
    bool enabled = false;
};

struct DecompositionBlock {
    MinWagePolicy policy;
    DecompositionOrder order = DecompositionOrder::forward;
    std::vector<Functional> functionals{Functional::quantile};
    std::vector<std::string> union_covariates;
    bool smooth = false;
    double bandwidth = 0.015;
    bool present = false;
};

struct RunConfig {
    std::string input_path;
    CsvColumns columns;
    std::string union_column = "union";
    EstimatorChoice estimator;
    GridConfig grids;
    int fit_group = 0;
    int max_iterations = 200;
    double tolerance = 1e-9;
    std::vector<CounterfactualConfig> counterfactuals;
    BootstrapConfig bootstrap;
    DecompositionBlock decomposition;
    std::string output_dir = ".";
    std::string prefix;
    std::optional<std::uint64_t> seed;
};

/// Parses and validates a config document. Errors are ConfigError messages
/// that start with the JSON path of the offending field, e.g. "bootstrap.replications: ...".
RunConfig parse_config(const std::string& text);

/// Checks that every referenced column exists in the loaded data.
void check_columns(const RunConfig& config, const GroupedDataset& dataset);

EvaluationGrids build_grids(const RunConfig& config, const GroupedDataset& dataset);

/// Hex SHA-256 of the raw config bytes.
std::string config_hash(const std::string& text);

} // namespace cfdist::cli
