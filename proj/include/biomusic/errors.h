#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace biomusic {

// Invalid arguments use std::invalid_argument directly; the types below carry
// the domain failures callers are expected to branch on.

/// No spectral peak could be located in the requested band.
class NoPeakError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Correlation matrix carries no usable signal energy.
class DegenerateSignalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input is too short (or too sparse) for the requested analysis.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A candidate plan failed validation; `fields()` names every offending field.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::vector<std::string> fields, const std::string& detail)
      : std::runtime_error(detail), fields_(std::move(fields)) {}

  const std::vector<std::string>& fields() const noexcept { return fields_; }

 private:
  std::vector<std::string> fields_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A session log line could not be decoded. Line numbers are 1-based.
class LogFormatError : public std::runtime_error {
 public:
  LogFormatError(std::size_t line, const std::string& detail)
      : std::runtime_error("line " + std::to_string(line) + ": " + detail), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace biomusic
