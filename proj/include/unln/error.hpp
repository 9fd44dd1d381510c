#pragma once

#include <stdexcept>
#include <string>

namespace unln {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 2, FormatError -> 3, NumericalError -> 4.
// ShapeError marks dimension mismatches between tensors; the CLI treats it
// as a configuration problem.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace unln
