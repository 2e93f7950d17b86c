#pragma once

#include <stdexcept>
#include <string>

namespace rdn {

// All library errors derive from Error and carry a short machine-readable
// category used by the CLI's "error: <category>: <detail>" output.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& detail)
      : std::runtime_error(detail), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& detail)
      : Error("contract-violation", detail) {}
};

class BoundsError : public Error {
 public:
  explicit BoundsError(const std::string& detail) : Error("bounds", detail) {}
};

class DecodeError : public Error {
 public:
  explicit DecodeError(const std::string& detail) : Error("decode", detail) {}
};

class DegeneracyError : public Error {
 public:
  explicit DegeneracyError(const std::string& detail)
      : Error("degeneracy", detail) {}
};

class NoConsensusError : public Error {
 public:
  explicit NoConsensusError(const std::string& detail)
      : Error("no-consensus", detail) {}
};

class DegeneratePoolError : public Error {
 public:
  explicit DegeneratePoolError(const std::string& detail)
      : Error("degenerate-pool", detail) {}
};

class TrainingDivergence : public Error {
 public:
  explicit TrainingDivergence(const std::string& detail)
      : Error("training-divergence", detail) {}
};

class FixtureError : public Error {
 public:
  explicit FixtureError(const std::string& detail)
      : Error("fixture", detail) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& detail) : Error("io", detail) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& detail)
      : Error("config", detail) {}
};

}  // namespace rdn
