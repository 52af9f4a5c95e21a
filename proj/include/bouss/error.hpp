#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bouss {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InvalidMesh : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class InvalidProfile : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class DimensionMismatch : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class DomainError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// Failures of the numerical solvers (forward march, Newton, Picard).
class SolverError : public Error {
public:
    using Error::Error;
};

class SingularMatrix : public SolverError {
public:
    explicit SingularMatrix(std::size_t pivot_row)
        : SolverError("singular matrix: zero pivot at row " + std::to_string(pivot_row)),
          pivot_row_(pivot_row) {}
    std::size_t pivot_row() const noexcept { return pivot_row_; }

private:
    std::size_t pivot_row_;
};

class NewtonFailure : public SolverError {
public:
    NewtonFailure(int iterations, double residual_norm)
        : SolverError("Newton iteration did not converge after " + std::to_string(iterations) +
                      " iterations (residual " + std::to_string(residual_norm) + ")"),
          iterations_(iterations), residual_norm_(residual_norm) {}
    int iterations() const noexcept { return iterations_; }
    double residual_norm() const noexcept { return residual_norm_; }

private:
    int iterations_;
    double residual_norm_;
};

/// NaN or Inf encountered while solving.
class Divergence : public SolverError {
public:
    using SolverError::SolverError;
};

/// A time step failed; wraps the underlying cause with the step index.
class StepFailure : public SolverError {
public:
    StepFailure(std::size_t step_index, double residual_norm, const std::string& cause)
        : SolverError("time step " + std::to_string(step_index) + " failed: " + cause),
          step_index_(step_index), residual_norm_(residual_norm) {}
    std::size_t step_index() const noexcept { return step_index_; }
    double residual_norm() const noexcept { return residual_norm_; }

private:
    std::size_t step_index_;
    double residual_norm_;
};

/// Picard sweeps stopped contracting.
class NonContraction : public SolverError {
public:
    NonContraction(const std::string& what, std::vector<double> sweep_differences)
        : SolverError(what), sweep_differences_(std::move(sweep_differences)) {}
    const std::vector<double>& sweep_differences() const noexcept { return sweep_differences_; }

private:
    std::vector<double> sweep_differences_;
};

class OptimizerError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace bouss
