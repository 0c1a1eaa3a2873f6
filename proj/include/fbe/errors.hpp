#pragma once

#include <stdexcept>
#include <string>

namespace fbe {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed something that violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A computation would exceed a configured budget.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// A keyed record was not present.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its content does not follow the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Annotation record could not be parsed. Carries the location.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Parsed values fall outside the vocabulary or other declared ranges.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Run configuration is inconsistent (missing prerequisite inputs, bad flag values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fbe
