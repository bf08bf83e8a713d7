#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfdist/counterfactual.hpp"
#include "cfdist/decomposition.hpp"
#include "cfdist/estimators.hpp"
#include "cfdist/inference.hpp"

namespace cfdist {

/// Shortest text with 17 significant digits ("%.17g"); round-trips exactly.
std::string format_double(double value);

/// Serializes `value` with every number formatted by format_double and object
/// keys in the order nlohmann stores them (sorted), so equal documents give equal bytes.
std::string dump_json(const nlohmann::json& value, int indent = 2);

/// Provenance block carried by every output file.
struct Metadata {
    std::string tool = "cfdist";
    std::string version;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string command;
};

nlohmann::json to_json(const Metadata& meta);
/// "# key: value" lines placed before a CSV header.
void write_metadata_comments(std::ostream& out, const Metadata& meta);

nlohmann::json to_json(const ConditionalQuantileModel& model);
nlohmann::json to_json(const ConditionalDistributionModel& model);
ConditionalQuantileModel quantile_model_from_json(const nlohmann::json& j);
ConditionalDistributionModel distribution_model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StepDistribution& dist);
nlohmann::json to_json(const FunctionalCurve& curve);
nlohmann::json to_json(const UniformBand& band);
nlohmann::json to_json(const KsTestReport& report);
nlohmann::json to_json(const DecompositionReport& report);
nlohmann::json to_json(const DecompositionResult& result);

/// One row of a *.curves.csv file.
struct CurveRow {
    std::string functional;
    double grid = 0.0;
    double estimate = 0.0;
    std::optional<double> lower;
    std::optional<double> upper;
    std::optional<double> se;
};

std::vector<CurveRow> curve_rows(const std::string& functional, const FunctionalCurve& curve,
                                 const std::optional<UniformBand>& band = std::nullopt);

/// Columns functional,grid,estimate,lower,upper,se; missing band cells are empty.
void write_curves_csv(std::ostream& out, const std::vector<CurveRow>& rows);

/// Columns functional,component,grid,estimate,lower,upper, with the total as component "total".
void write_decomposition_csv(std::ostream& out, const DecompositionResult& result);

/// Bootstrap draws as CSV: replication followed by one column per flattened grid point.
void write_draws_csv(std::ostream& out, const BootstrapDraws& draws);

} // namespace cfdist
