#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace perfowave {

/// Invalid or inconsistent user configuration (bad spacing, unknown keys).
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Input that violates a documented precondition of an operation.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Iterative linear solver did not reach the requested tolerance.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& message, std::size_t iterations, double residual)
      : std::runtime_error(message + " (iterations " + std::to_string(iterations) +
                           ", relative residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}
  std::size_t iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

private:
  std::size_t iterations_;
  double residual_;
};

/// Non-finite or runaway state detected during time stepping.
class BlowUpError : public std::runtime_error {
public:
  BlowUpError(std::size_t step, const std::string& what)
      : std::runtime_error("blow-up at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

}  // namespace perfowave
