#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mdfr {

// Bad sizes, out-of-range parameters, malformed configuration.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// A reservoir or integrator produced a non-finite value.
class NumericOverflow : public std::runtime_error {
public:
  NumericOverflow(const std::string& what, std::size_t node, std::size_t step)
      : std::runtime_error(what), node_(node), step_(step) {}

  std::size_t node() const noexcept { return node_; }
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t node_;
  std::size_t step_;
};

// Ridge Gram matrix could not be factored.
class SingularSystem : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Pole of a rational nonlinearity.
class SingularityError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class DivisionByZero : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// CSV / dataset ingestion failure. row() is 1-based, 0 when not row-specific.
class IngestionError : public std::runtime_error {
public:
  IngestionError(const std::string& what, std::size_t row = 0)
      : std::runtime_error(what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

class QuantizationFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Requested dataset is not present (e.g. DST files not installed).
class DatasetUnavailable : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace mdfr
