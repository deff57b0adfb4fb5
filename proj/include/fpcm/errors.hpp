#pragma once

#include <stdexcept>
#include <string>

namespace fpcm {

// Base for every error this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad call arguments: shape/dimension mismatches, out-of-range indices.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or other numeric breakdown; message carries the failing index.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A permutation is not a valid topological order; message names the edge.
class OrderingError : public Error {
 public:
  using Error::Error;
};

// A function violates the triangular/diagonal Jacobian structure.
class StructureError : public Error {
 public:
  using Error::Error;
};

// A requested operation is not supported by the given object.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Invalid generator/run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data lacks a required field (e.g. ground truth).
class DataError : public Error {
 public:
  using Error::Error;
};

// On-disk format violation (bad magic, truncated buffers).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Command-line misuse.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fpcm
