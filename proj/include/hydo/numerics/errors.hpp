#pragma once

#include <stdexcept>
#include <string>

namespace hydo {

// Bad hyperparameters, shapes fixed at construction, malformed config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: wrong shapes at call time, non-scalar loss, bad indices.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// NaN/Inf produced during training or sampling. Carries enough context to
// locate the offending step.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Environment could not be set up or was driven into an invalid state.
class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; message includes the line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hydo
