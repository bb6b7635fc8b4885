#pragma once

#include <stdexcept>
#include <string>

namespace rbclab {

/// Shape or dimension mismatch between operands.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Mathematical domain violation (log of non-positive value, etc).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API misuse: bad argument, wrong call order, index out of range.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed file contents. Carries the byte offset where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& msg, long long offset)
      : std::runtime_error(msg + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  long long offset() const { return offset_; }

 private:
  long long offset_;
};

/// File format version not understood by this build.
class VersionError : public std::runtime_error {
 public:
  explicit VersionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure inside an optimization or loss evaluation.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Simulation left the bounded nondimensional regime. Carries the time of failure.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(const std::string& msg, double time)
      : std::runtime_error(msg + " (t = " + std::to_string(time) + ")"), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

}  // namespace rbclab
