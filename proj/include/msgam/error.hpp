#pragma once

#include <stdexcept>
#include <string>

namespace msgam {

/// Invalid user input: malformed data, bad dimensions, out-of-range options.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msgam
