#pragma once

#include <stdexcept>
#include <string>

namespace cfdist {

// Error taxonomy. The CLI maps each family onto an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Input data problems: unreadable files, malformed cells, schema violations.
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t row)
        : DataError(what + " (row " + std::to_string(row) + ")"), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class ValidationError : public DataError {
public:
    using DataError::DataError;
};

// Numerical failures: singular designs, solver non-convergence, degenerate bands.
class NumericalError : public Error {
public:
    using Error::Error;
};

class SingularDesignError : public NumericalError {
public:
    SingularDesignError(const std::string& column)
        : NumericalError("design matrix is rank deficient at column '" + column + "'"),
          column_(column) {}
    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

class SolverError : public NumericalError {
public:
    SolverError(const std::string& what, double index)
        : NumericalError(what + " at index " + std::to_string(index)), index_(index) {}
    double index() const noexcept { return index_; }

private:
    double index_;
};

// A functional evaluated outside its domain (negative support for Lorenz, u outside (0,1), ...).
class DomainError : public Error {
public:
    using Error::Error;
};

} // namespace cfdist
