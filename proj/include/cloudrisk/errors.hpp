#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cloudrisk {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid scenario, workload, graph or controller configuration.
/// Raised before any simulation step executes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (label syntax, trace lines, JSON documents).
class ParseError : public ConfigError {
 public:
  explicit ParseError(const std::string& msg, std::size_t line = 0)
      : ConfigError(line == 0 ? msg : "line " + std::to_string(line) + ": " + msg),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A declassification request the held capabilities cannot authorize.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Statistical estimator called with too little data.
class StatError : public Error {
 public:
  using Error::Error;
};

/// Exact enumeration refused because the input exceeds the size guard.
class TooLarge : public Error {
 public:
  using Error::Error;
};

}  // namespace cloudrisk
