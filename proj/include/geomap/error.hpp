#pragma once

#include <stdexcept>
#include <string>

namespace geomap {

/// Base of every error the library throws. Each subclass maps onto one of the
/// CLI exit-code families (usage, data, backend/tool).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a definitional precondition (wrong count, empty set, unknown name).
class DefinitionError : public Error {
 public:
  using Error::Error;
};

/// A box or crop that does not fit its image.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Malformed input document (JSON, CSV, snapshot, annotation).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Referenced map id / file / item not found.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Model backend failure after retries.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Request too large for the configured backend; raised before any network call.
class PayloadError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Detector provider failure.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Tool-pool failure (missing snapshot file, bad raster).
class ToolError : public Error {
 public:
  using Error::Error;
};

/// Fixture spec cannot be rendered (layout overflow etc).
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Judge produced no parsable verdict within the re-ask budget.
class JudgeError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Component extraction produced no parsable JSON within the re-ask budget.
class ExtractionError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace geomap
