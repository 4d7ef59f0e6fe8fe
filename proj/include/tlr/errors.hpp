#pragma once

#include <stdexcept>
#include <string>

namespace tlr {

// Error taxonomy shared by the library and the CLI exit codes:
// configuration/usage (2), data/format (3), numerical abort (4).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg, int where = -1)
      : Error(msg), index(where) {}
  int index;  // failing column / block when known
};

}  // namespace tlr
