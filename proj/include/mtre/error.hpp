#pragma once

#include <stdexcept>
#include <string>

namespace mtre {

/// Failure categories. The CLI maps them onto stable exit codes.
enum class ErrorKind {
  config = 2,   // invalid configuration or precondition
  data = 3,     // malformed or inconsistent dataset / file
  numeric = 4,  // non-finite values during computation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace mtre
