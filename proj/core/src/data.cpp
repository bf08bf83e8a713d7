#include "cfdist/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "cfdist/error.hpp"
#include "cfdist/serialization.hpp"

namespace cfdist {

namespace {

Eigen::VectorXd normalized(Eigen::VectorXd w) {
    const double total = w.sum();
    if (!(total > 0.0) || !std::isfinite(total)) {
        throw ValidationError("group has no observation with positive weight");
    }
    // Already-normalized weights are kept bit-for-bit so that ingestion is idempotent.
    if (std::abs(total - 1.0) > 1e-12) {
        w /= total;
    }
    return w;
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t row) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (quoted) {
        throw ParseError("unterminated quoted field", row);
    }
    fields.push_back(std::move(field));
    return fields;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

double parse_number(const std::string& raw, std::size_t row, const std::string& column) {
    const std::string cell = trim(raw);
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = cell.data() + cell.size();
    if (!cell.empty() && *begin == '+') {
        ++begin;
    }
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (cell.empty() || ec != std::errc() || ptr != end) {
        throw ParseError("malformed numeric cell '" + cell + "' in column '" + column + "'", row);
    }
    if (!std::isfinite(value)) {
        throw ParseError("non-finite value in column '" + column + "'", row);
    }
    return value;
}

} // namespace

GroupSample::GroupSample(Eigen::VectorXd outcome, Eigen::MatrixXd covariates, Eigen::VectorXd weights)
    : outcome_(std::move(outcome)), covariates_(std::move(covariates)) {
    if (outcome_.size() == 0) {
        throw ValidationError("group is empty");
    }
    if (covariates_.rows() != outcome_.size() || weights.size() != outcome_.size()) {
        throw ValidationError("outcome, covariate and weight lengths differ");
    }
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
            throw ValidationError("negative or non-finite weight at observation " + std::to_string(i));
        }
    }
    weights_ = normalized(std::move(weights));
}

Observation GroupSample::observation(std::size_t i) const {
    const auto r = static_cast<Eigen::Index>(i);
    Observation obs;
    obs.outcome = outcome_[r];
    obs.covariates.resize(dim());
    for (std::size_t j = 0; j < dim(); ++j) {
        obs.covariates[j] = covariates_(r, static_cast<Eigen::Index>(j));
    }
    obs.weight = weights_[r];
    return obs;
}

Eigen::MatrixXd GroupSample::design() const {
    Eigen::MatrixXd z(covariates_.rows(), covariates_.cols() + 1);
    z.col(0).setOnes();
    z.rightCols(covariates_.cols()) = covariates_;
    return z;
}

GroupSample GroupSample::reweighted(std::span<const double> multipliers) const {
    if (multipliers.size() != size()) {
        throw ValidationError("multiplier vector length does not match group size");
    }
    Eigen::VectorXd w(weights_.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w[i] = weights_[i] * multipliers[static_cast<std::size_t>(i)];
    }
    return GroupSample(outcome_, covariates_, std::move(w));
}

GroupSample GroupSample::with_covariate(std::size_t column, double value) const {
    GroupSample copy = *this;
    copy.covariates_.col(static_cast<Eigen::Index>(column)).setConstant(value);
    return copy;
}

GroupedDataset::GroupedDataset(GroupSample group0, GroupSample group1,
                               std::vector<std::string> covariate_names,
                               std::array<std::string, 2> group_labels)
    : groups_{std::move(group0), std::move(group1)},
      covariate_names_(std::move(covariate_names)),
      group_labels_(std::move(group_labels)) {
    for (const auto& g : groups_) {
        if (g.size() == 0) {
            throw SchemaError("both groups must be nonempty");
        }
        if (g.dim() != covariate_names_.size()) {
            throw SchemaError("covariate dimension differs across groups");
        }
    }
}

const GroupSample& GroupedDataset::group(int j) const {
    if (j != 0 && j != 1) {
        throw ConfigError("group index must be 0 or 1, got " + std::to_string(j));
    }
    return groups_[static_cast<std::size_t>(j)];
}

std::size_t GroupedDataset::covariate_index(const std::string& name) const {
    const auto it = std::find(covariate_names_.begin(), covariate_names_.end(), name);
    if (it == covariate_names_.end()) {
        throw SchemaError("unknown covariate '" + name + "'");
    }
    return static_cast<std::size_t>(it - covariate_names_.begin());
}

GroupedDataset GroupedDataset::reweighted(std::span<const double> multipliers0,
                                          std::span<const double> multipliers1) const {
    return GroupedDataset(groups_[0].reweighted(multipliers0), groups_[1].reweighted(multipliers1),
                          covariate_names_, group_labels_);
}

GroupedDataset load_csv(const std::string& path, const CsvColumns& columns) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    return read_csv(in, columns);
}

GroupedDataset read_csv(std::istream& in, const CsvColumns& columns) {
    std::string line;
    if (!std::getline(in, line)) {
        throw SchemaError("missing header row");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
        line.erase(0, 3); // UTF-8 BOM
    }
    const auto header = split_csv_line(line, 1);
    auto column_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (trim(header[i]) == name) {
                return i;
            }
        }
        throw SchemaError("column '" + name + "' not found");
    };

    const std::size_t outcome_col = column_of(columns.outcome);
    const std::size_t group_col = column_of(columns.group);
    std::vector<std::size_t> covariate_cols;
    for (const auto& name : columns.covariates) {
        covariate_cols.push_back(column_of(name));
    }
    std::optional<std::size_t> weight_col;
    if (columns.weight) {
        weight_col = column_of(*columns.weight);
    }

    struct Row {
        double y;
        std::vector<double> x;
        double w;
    };
    std::map<std::string, std::vector<Row>> by_label;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split_csv_line(line, row);
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(fields.size()),
                             row);
        }
        Row r;
        r.y = parse_number(fields[outcome_col], row, columns.outcome);
        for (std::size_t k = 0; k < covariate_cols.size(); ++k) {
            r.x.push_back(parse_number(fields[covariate_cols[k]], row, columns.covariates[k]));
        }
        r.w = weight_col ? parse_number(fields[*weight_col], row, *columns.weight) : 1.0;
        if (r.w < 0.0) {
            throw ValidationError("negative weight at row " + std::to_string(row));
        }
        by_label[trim(fields[group_col])].push_back(std::move(r));
    }

    if (by_label.size() != 2) {
        throw SchemaError("group column '" + columns.group + "' must take exactly two distinct values, found " +
                          std::to_string(by_label.size()));
    }
    std::array<std::string, 2> labels{by_label.begin()->first, std::next(by_label.begin())->first};
    if (!columns.group_order.empty()) {
        if (columns.group_order.size() != 2 || !by_label.contains(columns.group_order[0]) ||
            !by_label.contains(columns.group_order[1]) || columns.group_order[0] == columns.group_order[1]) {
            throw SchemaError("group_order must name the two group labels present in the data");
        }
        labels = {columns.group_order[0], columns.group_order[1]};
    }

    auto build = [&](const std::vector<Row>& rows) {
        const auto n = static_cast<Eigen::Index>(rows.size());
        const auto p = static_cast<Eigen::Index>(covariate_cols.size());
        Eigen::VectorXd y(n), w(n);
        Eigen::MatrixXd x(n, p);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& r = rows[static_cast<std::size_t>(i)];
            y[i] = r.y;
            w[i] = r.w;
            for (Eigen::Index j = 0; j < p; ++j) {
                x(i, j) = r.x[static_cast<std::size_t>(j)];
            }
        }
        return GroupSample(std::move(y), std::move(x), std::move(w));
    };
    return GroupedDataset(build(by_label.at(labels[0])), build(by_label.at(labels[1])), columns.covariates,
                          labels);
}

void write_csv(std::ostream& out, const GroupedDataset& dataset, const std::string& outcome_name,
               const std::string& group_name, const std::string& weight_name) {
    out << group_name << ',' << outcome_name;
    for (const auto& name : dataset.covariate_names()) {
        out << ',' << name;
    }
    out << ',' << weight_name << '\n';
    for (int j = 0; j < 2; ++j) {
        const auto& g = dataset.group(j);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(g.size()); ++i) {
            out << dataset.group_labels()[static_cast<std::size_t>(j)] << ',' << format_double(g.outcome()[i]);
            for (Eigen::Index k = 0; k < g.covariates().cols(); ++k) {
                out << ',' << format_double(g.covariates()(i, k));
            }
            out << ',' << format_double(g.weights()[i]) << '\n';
        }
    }
}

CsvColumns written_columns(const GroupedDataset& dataset, const std::string& outcome_name,
                           const std::string& group_name, const std::string& weight_name) {
    CsvColumns c;
    c.outcome = outcome_name;
    c.covariates = dataset.covariate_names();
    c.weight = weight_name;
    c.group = group_name;
    c.group_order = {dataset.group_labels()[0], dataset.group_labels()[1]};
    return c;
}

std::vector<double> default_u_grid(double lo, double hi, double step) {
    if (!(lo > 0.0 && hi < 1.0 && lo <= hi && step > 0.0)) {
        throw DomainError("u grid must satisfy 0 < lo <= hi < 1 with positive step");
    }
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i) {
        // Rounded to the step's decimal resolution so 0.02 + 0.001 * k prints as expected.
        grid[i] = std::round((lo + step * static_cast<double>(i)) * 1e12) / 1e12;
    }
    return grid;
}

std::vector<double> default_y_grid(const GroupedDataset& dataset, std::size_t n_points) {
    if (n_points < 2) {
        throw DomainError("y grid needs at least two points");
    }
    std::vector<double> pooled;
    for (int j = 0; j < 2; ++j) {
        const auto& y = dataset.group(j).outcome();
        pooled.insert(pooled.end(), y.data(), y.data() + y.size());
    }
    std::sort(pooled.begin(), pooled.end());
    std::vector<double> distinct = pooled;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) {
        throw DomainError("outcome is degenerate (single distinct value)");
    }
    if (distinct.size() <= n_points) {
        return distinct;
    }
    const auto n = static_cast<double>(pooled.size());
    std::vector<double> grid;
    grid.reserve(n_points);
    for (std::size_t k = 0; k < n_points; ++k) {
        const double prob = static_cast<double>(k) / static_cast<double>(n_points - 1);
        // Left-inverse of the pooled empirical CDF; probability 0 maps to the minimum.
        const double rank = std::ceil(prob * n - 1e-9);
        const auto idx = static_cast<std::size_t>(std::clamp(rank - 1.0, 0.0, n - 1.0));
        grid.push_back(pooled[idx]);
    }
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

void validate_grid(std::span<const double> grid, bool probabilities, const char* name) {
    if (grid.empty()) {
        throw DomainError(std::string(name) + " is empty");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i])) {
            throw DomainError(std::string(name) + " contains a non-finite value");
        }
        if (probabilities && !(grid[i] > 0.0 && grid[i] < 1.0)) {
            throw DomainError(std::string(name) + " must lie strictly inside (0,1)");
        }
        if (i > 0 && !(grid[i] > grid[i - 1])) {
            throw DomainError(std::string(name) + " must be strictly increasing");
        }
    }
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double u) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    const double target = u * total;
    double cum = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const std::size_t i = order[k];
        cum += weights[i];
        // Ties in value share one step; only test the CDF at the end of a tie run.
        if (k + 1 < order.size() && values[order[k + 1]] == values[i]) {
            continue;
        }
        if (cum >= target * (1.0 - 1e-14) && cum > 0.0) {
            return values[i];
        }
    }
    return values[order.back()];
}

} // namespace cfdist
