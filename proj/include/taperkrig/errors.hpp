#pragma once

#include <stdexcept>
#include <string>

namespace taperkrig {

// Bad user input: malformed files, invalid configuration, rejected ingest.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dataset-level ingest problems (duplicate coordinates, length mismatch, ...).
class IngestError : public ConfigError {
 public:
  explicit IngestError(const std::string& what) : ConfigError(what) {}
};

// Numerical failure after a valid setup.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Cholesky pivot became nonpositive; the matrix is numerically not SPD.
// Carries both the pivot position in elimination order and the original
// dataset index it corresponds to.
class NotPositiveDefiniteError : public NumericalError {
 public:
  NotPositiveDefiniteError(const std::string& what, int pivot, int original_index)
      : NumericalError(what), pivot_(pivot), original_index_(original_index) {}

  int pivot() const { return pivot_; }
  int original_index() const { return original_index_; }

 private:
  int pivot_;
  int original_index_;
};

// Estimation could not produce a usable result (all repeats failed, empty
// variogram, non-finite starting objective, ...).
class EstimationError : public NumericalError {
 public:
  explicit EstimationError(const std::string& what) : NumericalError(what) {}
};

// A request exceeded a hard size limit (dense fallback, simulation).
class SizeError : public ConfigError {
 public:
  explicit SizeError(const std::string& what) : ConfigError(what) {}
};

}  // namespace taperkrig
