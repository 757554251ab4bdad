#pragma once

#include <stdexcept>
#include <string>

namespace alssl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates an operation's preconditions (shape mismatch,
/// non-finite values, misaligned ids).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A configuration value failed validation. `key()` is the dotted path of
/// the offending entry, e.g. "ssl.alpha".
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(key + ": " + message), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class DataErrorCode {
  io,
  malformed_header,
  truncated_record,
  label_out_of_range,
  bad_magic,
  parse,
  degenerate,
};

/// Dataset parsing / generation failure.
class DataError : public Error {
 public:
  DataError(DataErrorCode code, const std::string& message)
      : Error(message), code_(code) {}

  DataErrorCode code() const noexcept { return code_; }

 private:
  DataErrorCode code_;
};

/// Raised by an oracle that could not deliver labels for a cycle
/// (timeout, user abort). The cycle is retryable.
class OracleAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace alssl
