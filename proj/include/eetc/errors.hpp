#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace eetc {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Domain data violates a documented invariant (bad parameter, bad journey).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Vector or program dimensions do not match.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the path and the 1-based offending line
/// (0 when the error is not tied to a specific line).
class ParseError : public Error {
 public:
  ParseError(std::string path, int line, const std::string& msg)
      : Error(path + ":" + std::to_string(line) + ": " + msg),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const { return path_; }
  int line() const { return line_; }

 private:
  std::string path_;
  int line_;
};

/// Conic transcription failed; names the offending constraint family.
class AssemblyError : public Error {
 public:
  AssemblyError(std::string family, const std::string& msg)
      : Error("assembly [" + family + "]: " + msg), family_(std::move(family)) {}

  const std::string& family() const { return family_; }

 private:
  std::string family_;
};

/// A perturbation was requested at a pivot that carries no usable slack.
class AlreadyExactError : public Error {
 public:
  using Error::Error;
};

/// A perturbation precondition does not hold (e.g. nonpositive first-segment
/// work), so no certificate can be constructed.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown inside a perturbation construction (shrink limit
/// exhausted, bisection sign condition violated).
class AuditNumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace eetc
