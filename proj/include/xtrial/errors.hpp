#pragma once

#include <stdexcept>
#include <string>

namespace xtrial {

// Input file could not be parsed (bad numeric cell, short row, ...).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Column mapping / registry configuration is inconsistent.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// A value is outside its legal domain (delta not in {0,1}, weight <= 0, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// A fit could not be produced (single-class outcome, non-convergent
// fluctuation, no sampled units). Carries a diagnostics string.
class EstimationError : public std::runtime_error {
 public:
  explicit EstimationError(const std::string& msg, std::string diagnostics = "")
      : std::runtime_error(msg), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const { return diagnostics_; }

 private:
  std::string diagnostics_;
};

// Exact enumeration asked to expand a support that is too large.
class ResourceError : public std::runtime_error {
 public:
  explicit ResourceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace xtrial
