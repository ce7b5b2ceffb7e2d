#pragma once

#include <stdexcept>
#include <string>

namespace toder {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input (trajectories, manifests, config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Binary/image content that does not match the expected encoding.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration; the CLI maps this to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written for a different network or spec.
class IncompatibleCheckpoint : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace toder
