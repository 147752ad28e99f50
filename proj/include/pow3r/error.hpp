#pragma once

#include <stdexcept>
#include <string>

namespace pow3r {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kValidation = 2,
  kTransport = 3,
  kInternal = 4,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Input data or configuration violates a documented invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what, ExitCode::kValidation) {}
};

/// Malformed line in a line-delimited input file.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what) : Error(what, ExitCode::kTransport) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(what, ExitCode::kInternal) {}
};

}  // namespace pow3r
