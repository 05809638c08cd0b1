#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icelab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The boundary condition admits no height function (parity or Lipschitz
/// obstruction).
class InadmissibleBoundary : public Error {
 public:
  using Error::Error;
};

/// Coupling from the past hit its sweep cap before the extremal chains met.
class NotCoalesced : public Error {
 public:
  using Error::Error;
};

/// Exhaustive enumeration would exceed the caller's cap.
class TooLarge : public Error {
 public:
  using Error::Error;
};

/// An experiment configuration is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated persisted data. `row` is 1-based; 0 when unknown.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t row = 0)
      : Error(row == 0 ? what : what + " (row " + std::to_string(row) + ")"),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace icelab
