#pragma once

#include <stdexcept>
#include <string>

namespace lifefuse {

// Raised when a computation produces non-finite values or leaves its
// numeric domain. The CLI maps this family to exit code 3; validation
// errors (std::invalid_argument and friends) map to exit code 2.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateSignalError : std::invalid_argument {
  explicit DegenerateSignalError(const std::string& what) : std::invalid_argument(what) {}
};

// Total conflict in evidence combination; the combined mass is undefined.
struct ConflictError : NumericalError {
  explicit ConflictError(const std::string& what) : NumericalError(what) {}
};

}  // namespace lifefuse
