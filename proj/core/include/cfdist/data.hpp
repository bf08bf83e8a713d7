#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cfdist {

struct Observation {
    double outcome = 0.0;
    std::vector<double> covariates;
    double weight = 1.0;
};

/// One group's weighted sample, stored column-wise.
///
/// Weights are normalized to sum to one on construction; all downstream
/// weighted sums are therefore weighted averages. Immutable once built.
class GroupSample {
public:
    GroupSample() = default;
    GroupSample(Eigen::VectorXd outcome, Eigen::MatrixXd covariates, Eigen::VectorXd weights);

    std::size_t size() const noexcept { return static_cast<std::size_t>(outcome_.size()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(covariates_.cols()); }

    const Eigen::VectorXd& outcome() const noexcept { return outcome_; }
    const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
    const Eigen::VectorXd& weights() const noexcept { return weights_; }

    Observation observation(std::size_t i) const;

    /// Intercept column followed by the covariates.
    Eigen::MatrixXd design() const;

    /// Sample with weights w_i * m_i, renormalized. Used by the bootstrap.
    GroupSample reweighted(std::span<const double> multipliers) const;

    /// Same sample with every value of covariate `column` replaced by `value`.
    GroupSample with_covariate(std::size_t column, double value) const;

private:
    Eigen::VectorXd outcome_;
    Eigen::MatrixXd covariates_;
    Eigen::VectorXd weights_;
};

/// Two weighted groups sharing the covariate layout.
class GroupedDataset {
public:
    GroupedDataset(GroupSample group0, GroupSample group1,
                   std::vector<std::string> covariate_names,
                   std::array<std::string, 2> group_labels = {"0", "1"});

    const GroupSample& group(int j) const;
    const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
    const std::array<std::string, 2>& group_labels() const noexcept { return group_labels_; }
    std::size_t dim() const noexcept { return covariate_names_.size(); }

    /// Index of a named covariate; throws SchemaError when absent.
    std::size_t covariate_index(const std::string& name) const;

    /// Both groups reweighted by per-group multipliers (bootstrap draws).
    GroupedDataset reweighted(std::span<const double> multipliers0,
                              std::span<const double> multipliers1) const;

private:
    std::array<GroupSample, 2> groups_;
    std::vector<std::string> covariate_names_;
    std::array<std::string, 2> group_labels_;
};

struct CsvColumns {
    std::string outcome;
    std::vector<std::string> covariates;
    std::optional<std::string> weight;
    std::string group;
    /// Explicit label order {label of group 0, label of group 1}; empty means
    /// ascending lexicographic order of the labels found in the file.
    std::vector<std::string> group_order;
};

/// Parse errors carry the 1-based line number in the file (the header is line 1).
GroupedDataset load_csv(const std::string& path, const CsvColumns& columns);
GroupedDataset read_csv(std::istream& in, const CsvColumns& columns);

/// Writes the dataset with columns (group, outcome, covariates..., weight).
/// Reading it back with `written_columns` reproduces the dataset exactly.
void write_csv(std::ostream& out, const GroupedDataset& dataset,
               const std::string& outcome_name = "outcome",
               const std::string& group_name = "group",
               const std::string& weight_name = "weight");
CsvColumns written_columns(const GroupedDataset& dataset,
                           const std::string& outcome_name = "outcome",
                           const std::string& group_name = "group",
                           const std::string& weight_name = "weight");

struct EvaluationGrids {
    std::vector<double> u_grid;
    std::vector<double> y_grid;
};

/// {lo, lo + step, ..., hi}; defaults to {0.02, 0.021, ..., 0.98}.
std::vector<double> default_u_grid(double lo = 0.02, double hi = 0.98, double step = 0.001);

/// Distinct pooled outcomes when there are at most `n_points` of them,
/// otherwise unweighted pooled sample quantiles at equispaced probabilities {0, ..., 1}.
std::vector<double> default_y_grid(const GroupedDataset& dataset, std::size_t n_points);

/// Throws DomainError unless the grid is strictly increasing (and inside (0,1)
/// when `probabilities` is set).
void validate_grid(std::span<const double> grid, bool probabilities, const char* name);

/// Weighted left-inverse quantile inf{v : F_w(v) >= u}.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double u);

} // namespace cfdist
