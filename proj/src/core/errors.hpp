#pragma once

#include <stdexcept>
#include <string>

namespace monosfm {

// Invalid numeric argument (non-positive focal length, depth, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Tensor shapes that do not fit an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad or inconsistent configuration. `field` names the offending key when known.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Missing or unreadable dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Optimisation diverged (non-finite loss or intermediate).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace monosfm
