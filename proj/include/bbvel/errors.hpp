#pragma once

#include <stdexcept>
#include <string>

namespace bbvel {

// Every failure raised by the library derives from Error so callers can map
// a category onto a process exit code without string matching.
enum class ErrorKind { Validation, Domain, Fit, Io, Format, Numeric, Config };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Input violates a type invariant or precondition (degenerate box, length mismatch).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

// Geometric input outside the domain of a projection formula.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorKind::Domain, what) {}
};

class FitError : public Error {
 public:
  explicit FitError(const std::string& what) : Error(ErrorKind::Fit, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

// Malformed, corrupt or version-mismatched file content.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

// NaN/Inf encountered during optimization.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

// Settings that are individually valid but jointly unusable.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace bbvel
