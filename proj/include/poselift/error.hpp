#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace poselift {

/// Coarse failure categories. The CLI maps each one to a process exit code.
enum class ErrorClass { config, parse, numeric, state, argument };

constexpr std::string_view to_string(ErrorClass c) {
  switch (c) {
    case ErrorClass::config: return "config";
    case ErrorClass::parse: return "parse";
    case ErrorClass::numeric: return "numeric";
    case ErrorClass::state: return "state";
    case ErrorClass::argument: return "argument";
  }
  return "unknown";
}

constexpr int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::config: return 2;
    case ErrorClass::argument: return 2;
    case ErrorClass::parse: return 3;
    case ErrorClass::numeric: return 4;
    case ErrorClass::state: return 5;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorClass::config, what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ErrorClass::argument, what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorClass::state, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorClass::numeric, what) {}
};

/// Point lies behind the camera (or on its principal plane).
class UnprojectableError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Rank-deficient triangulation system, typically near-parallel rays.
class DegenerateGeometryError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Load failure; `row` is the 1-based line number in the source file, 0 when
/// the problem is not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t row, const std::string& what)
      : Error(ErrorClass::parse,
              source + (row ? ":" + std::to_string(row) : std::string()) + ": " + what),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace poselift
