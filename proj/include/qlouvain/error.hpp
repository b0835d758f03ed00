#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qlouvain {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a structural constraint (bounds, duplicates).
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong object state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or config document that does not match the expected schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace qlouvain
