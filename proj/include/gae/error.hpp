#pragma once

#include <stdexcept>
#include <string>

namespace gae {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or extent mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

/// NaN/Inf produced by a forward op, or a value outside its numeric domain.
struct NumericError : Error {
  using Error::Error;
};

/// API misuse: wrong call order, mismatched plan/config, duplicate names.
struct UsageError : Error {
  using Error::Error;
};

/// Invalid configuration value or unknown configuration key.
struct ConfigError : Error {
  using Error::Error;
};

/// Invalid input data (bad mesh, duplicate centroids, inconsistent snapshot).
struct InputError : Error {
  using Error::Error;
};

/// File ingestion failure; message carries file name and line number.
struct IngestError : Error {
  using Error::Error;
};

/// Malformed or mismatched checkpoint file.
struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace gae
