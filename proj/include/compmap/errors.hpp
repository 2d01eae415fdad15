#pragma once

#include <stdexcept>
#include <string>

namespace compmap {

// Input data failed validation: malformed bundle, bad header, inconsistent
// dimensions. The CLI maps this to exit status 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric routine produced a non-finite value. Exit status 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command line or configuration. Exit status 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace compmap
