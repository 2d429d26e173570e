#pragma once

#include <stdexcept>
#include <string>

namespace rclab {

// Invalid parameters or preconditions the caller could have checked.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A request does not fit the stored window or the configured budget.
class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, truncated, corrupted or version-incompatible file.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace rclab
