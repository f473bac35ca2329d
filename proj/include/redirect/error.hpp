#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace redirect {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed corpus record. Carries the 1-based input line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid configuration (bad regex, out-of-range parameter, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A quantity is undefined for the given input, e.g. a median over fewer
/// than two reply times or a test over an all-zero sample.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A model cannot be trained from the given data.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// The scorer could not produce a likelihood for a request.
class ScoringError : public Error {
 public:
  using Error::Error;
};

/// Remote backend unreachable or timed out. Retryable.
class TransportError : public ScoringError {
 public:
  using ScoringError::ScoringError;
};

/// Remote backend answered with something that is not a valid response.
class ProtocolError : public ScoringError {
 public:
  using ScoringError::ScoringError;
};

}  // namespace redirect
