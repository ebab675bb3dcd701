#pragma once

#include <stdexcept>
#include <string>

namespace gvc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration or unknown identifiers. The CLI maps these to exit code 1.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input data (corpus lines, record files, expressions).
struct ParseError : Error {
  using Error::Error;
};

}  // namespace gvc
