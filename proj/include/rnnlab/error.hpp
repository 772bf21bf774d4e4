#pragma once

#include <stdexcept>
#include <string>

namespace rnnlab {

// Every hard error raised by the library. Callers that need to distinguish
// the divergence case catch NonFiniteError.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace rnnlab
