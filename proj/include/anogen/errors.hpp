#pragma once

#include <stdexcept>
#include <string>

namespace anogen {

// Bad or missing input data: unreadable directories, invalid splits,
// single-class training sets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A tensor shape did not match what a layer or container expected.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf appeared in an activation, gradient or loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed AGCK container. `field()` names what was being read.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace anogen
