#pragma once

#include <stdexcept>
#include <string>

namespace gdm {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Argument violates an operation's precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Training or CLI configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint file is missing, truncated, or does not match its metadata.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// A loss or gradient became NaN/Inf during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gdm
