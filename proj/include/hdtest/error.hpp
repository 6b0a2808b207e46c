#pragma once

#include <stdexcept>
#include <string>

namespace hdtest {

// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches, ragged input, non-finite entries, asymmetric matrices.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A mathematical precondition does not hold for otherwise well-formed input.
class DomainError : public Error {
 public:
  using Error::Error;
};

// The shrinkage formula is undefined at p == n.
class UnsupportedAspectRatio : public DomainError {
 public:
  using DomainError::DomainError;
};

class DegenerateSpectrum : public DomainError {
 public:
  using DomainError::DomainError;
};

class SingularCovariance : public DomainError {
 public:
  using DomainError::DomainError;
};

class DegenerateVariance : public DomainError {
 public:
  using DomainError::DomainError;
};

}  // namespace hdtest
