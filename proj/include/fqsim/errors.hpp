#pragma once

#include <stdexcept>
#include <string>

namespace fqsim {

/// Malformed or type-mismatched input file. Message names the offending field.
class SchemaError : public std::runtime_error {
public:
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structurally valid input that violates a model invariant. Message names the rule.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Newton iteration failed to meet tolerance within the iteration budget.
class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& msg, double residual)
      : std::runtime_error(msg), final_residual(residual) {}
  double final_residual;
};

/// A device could not be back-solved to a feasible equilibrium.
class InitializationError : public std::runtime_error {
public:
  explicit InitializationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fqsim
