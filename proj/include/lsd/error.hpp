#pragma once

#include <stdexcept>
#include <string>

namespace lsd {

/// Failure categories. The CLI maps these onto its exit codes.
enum class ErrorKind {
  Validation = 1,
  Numerical = 2,
  Io = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::Validation, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::Numerical, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

/// Malformed file content; carries the 1-based line it was detected on.
struct ParseError : ValidationError {
  ParseError(const std::string& file, int line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what),
        line(line) {}
  int line;
};

}  // namespace lsd
