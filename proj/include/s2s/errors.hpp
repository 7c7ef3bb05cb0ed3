#pragma once

#include <stdexcept>
#include <string>

#include "s2s/types.hpp"

namespace s2s {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied an argument outside the operation's domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Matrix decomposition / conditioning / overflow failure.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Iterative estimator stopped at its iteration cap. Carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, CMatrix last_iterate, int iterations)
      : Error(what), last_(std::move(last_iterate)), iterations_(iterations) {}

  const CMatrix& last_iterate() const noexcept { return last_; }
  int iterations() const noexcept { return iterations_; }

 private:
  CMatrix last_;
  int iterations_;
};

/// Malformed stack / raster / config file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant was violated (e.g. MM ascent property).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace s2s
