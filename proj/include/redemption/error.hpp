#pragma once

#include <stdexcept>
#include <string>

namespace redemption {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input: files, records, bundles, flags.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A required embedding or scalar is absent for some sample.
class MissingDataError : public InputError {
 public:
  using InputError::InputError;
};

/// Data that cannot support the requested statistic (constant columns,
/// singular covariance beyond the jitter ladder, too few samples).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// A grid specification that admits no feasible weight triple or is
/// not aligned to its own step.
class InfeasibleSpecError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace redemption
