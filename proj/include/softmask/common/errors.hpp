#pragma once

#include <stdexcept>
#include <string>

namespace softmask {

/// Base class for every error raised by the library. The CLI maps each
/// subclass onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed a value outside the operation's domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data is missing or inconsistent (empty corpus, missing mask, bad label).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file name or text record did not follow its declared grammar.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Configuration failed validation (unknown key, bad type, out of range value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Network wiring does not type-check (tap table or ISDC shape mismatch).
class WiringError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A retrieval protocol precondition was violated (query without valid match).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A training objective produced a NaN or infinity.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was invoked before the stage it depends on.
class PrerequisiteError : public Error {
 public:
  using Error::Error;
};

}  // namespace softmask
