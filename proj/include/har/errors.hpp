#pragma once

#include <stdexcept>
#include <string>

namespace har {

// Base class for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/model shape disagreement.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside its valid range (label ids, fractions, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Text inputs that fail to parse (hierarchy files, CLI literals).
class ParseError : public Error {
 public:
  using Error::Error;
};

// API misuse detected at runtime (backward on a non-scalar, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Operation invalid in the object's current state (double backward, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment / generator / attack configuration.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Corrupt or mismatched binary artifacts (bad checksum, wrong
// hierarchy hash, truncated payloads).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Training diverged or was fed an impossible configuration mid-run.
class TrainError : public Error {
 public:
  using Error::Error;
};

// Metric has no defined value on the given inputs (empty set or
// zero denominator). Callers report absence, never zero.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace har
