#pragma once

#include <stdexcept>
#include <string>

namespace sbnlab {

// Shape or extent mismatch between operands. Messages carry both shapes.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Value outside the mathematical domain of an operation (e.g. sigma <= 0).
class DomainError : public std::invalid_argument {
 public:
  explicit DomainError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Mini-batch too small to yield usable statistics.
class DegenerateBatchError : public std::invalid_argument {
 public:
  explicit DegenerateBatchError(const std::string& msg) : std::invalid_argument(msg) {}
};

// State that must be produced first (fit, running statistics) is missing.
class NotFittedError : public std::runtime_error {
 public:
  explicit NotFittedError(const std::string& msg) : std::runtime_error(msg) {}
};

// Wrong call order, e.g. backward without a tracked forward.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed external file (IDX payload, checkpoint container).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid run configuration or command usage. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sbnlab
