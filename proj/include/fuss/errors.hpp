#pragma once

#include <stdexcept>
#include <string>

namespace fuss {

// Invalid shapes, dimensions or parameter values supplied by the caller.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data: unmapped labels, mismatched masks, bad files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Client/server message inconsistencies during aggregation.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loss or parameter became non-finite during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fuss
