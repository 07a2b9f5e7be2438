#pragma once

#include <stdexcept>
#include <string>

namespace switchgeo {

// Invalid or inconsistent configuration / arguments (CLI exit code 2).
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure inside a computation; message names the module and the
// offending index where applicable (CLI exit code 3).
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem / serialization failure (CLI exit code 4).
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace switchgeo
