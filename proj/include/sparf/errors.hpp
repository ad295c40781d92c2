#pragma once

#include <stdexcept>
#include <string>

namespace sparf {

/// Invalid dimensions, out-of-range parameters, malformed config files.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A resource (VRAM, flash capacity, host memory) cannot hold the workload.
/// `constraint()` names the binding resource.
class CapacityError : public std::runtime_error {
 public:
  CapacityError(std::string constraint, std::string detail)
      : std::runtime_error(constraint + ": " + detail),
        constraint_(std::move(constraint)),
        detail_(std::move(detail)) {}
  const std::string& constraint() const noexcept { return constraint_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string constraint_;
  std::string detail_;
};

/// Lookup of a token or embedding that was never written.
class MappingError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Internal consistency violation (missing loaded group, reprogrammed page).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// ||q||_1 == 0 where a temperature must be derived from it.
class DegenerateQueryError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace sparf
