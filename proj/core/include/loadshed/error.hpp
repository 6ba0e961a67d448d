#pragma once

#include <stdexcept>
#include <string>

namespace loadshed {

/// Malformed or inconsistent network case data.
class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid problem setup (cost ordering, dimensions, bad arguments).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset or model file that does not match the expected schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical method could not produce a usable result.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace loadshed
