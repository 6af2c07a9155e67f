#pragma once

#include <stdexcept>
#include <string>

namespace wsimil {

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (manifests, bag files, cell tables).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Incompatible tensor or raster shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace wsimil
