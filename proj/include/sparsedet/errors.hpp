#pragma once

#include <stdexcept>
#include <string>

namespace sparsedet {

// Invalid configuration value; message names the violated bound.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operand shapes do not agree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent file contents.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data violates a semantic precondition (missing class, unknown factor, ...).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Loss or gradient became NaN/inf during optimization.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sparsedet
