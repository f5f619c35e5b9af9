#pragma once

#include <stdexcept>
#include <string>

namespace dexbody {

// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file or config (bad schema, unknown keys, invalid values).
struct SchemaError : Error {
  using Error::Error;
};

// Caller violated an operation contract (shape mismatch, bad argument).
struct InvalidArgument : Error {
  using Error::Error;
};

// Simulation state left the sane envelope (velocity blow-up or non-finite).
struct SimDiverged : Error {
  explicit SimDiverged(const std::string& what, std::string offending_body = {})
      : Error(what), body(std::move(offending_body)) {}
  std::string body;
};

// World could not be initialized from the requested state.
struct InitError : Error {
  using Error::Error;
};

// Filesystem-level failure (missing file, unwritable directory, truncation).
struct IoError : Error {
  using Error::Error;
};

// Source data lacks the feature an extraction step needs (e.g. a motion clip
// with no hand-object contact frame).
struct ExtractionError : Error {
  using Error::Error;
};

// A parameter update produced a non-finite loss or gradient; the parameters
// it would have touched are left at their previous values.
struct UpdateAborted : Error {
  using Error::Error;
};

}  // namespace dexbody
