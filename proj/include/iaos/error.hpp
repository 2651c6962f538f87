#pragma once

#include <stdexcept>
#include <string>

namespace iaos {

// Precondition or parameter-range violation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// File missing, unreadable, or malformed on disk.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public DomainError {
 public:
  using DomainError::DomainError;
};

class NonMonotoneTimestamps : public DomainError {
 public:
  using DomainError::DomainError;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw DomainError(what);
}

}  // namespace iaos
