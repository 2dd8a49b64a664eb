#pragma once

#include <stdexcept>
#include <string>

namespace signrec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input vector or density has the wrong number of components.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A left-to-right no-skip model cannot consume the sequence (too few frames).
class InfeasibleSequence : public Error {
 public:
  using Error::Error;
};

// Model parameters violate an invariant (weights, variances, rotations, ids).
class InvalidModel : public Error {
 public:
  using Error::Error;
};

// Malformed or empty data sets, unknown labels.
class DataError : public Error {
 public:
  using Error::Error;
};

// Every hypothesis was pruned during search.
class SearchFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace signrec
