#pragma once

#include <stdexcept>
#include <string>

namespace xlmimo {

/// Invalid or missing configuration entry.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside an operation's domain.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Iteration failed to converge or a solve produced non-finite values.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Scenario where every sampled channel is empty, so nothing can be normalised.
class DegenerateScenario : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace xlmimo
