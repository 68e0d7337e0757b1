#pragma once

#include <stdexcept>
#include <string>

namespace lakekeeper {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or malformed input file. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Query against a location that the queried object does not cover.
class QueryError : public Error {
public:
  using Error::Error;
};

/// Operation not permitted in the current state (mission phase, load ledger, ...).
class StateError : public Error {
public:
  using Error::Error;
};

}  // namespace lakekeeper
