#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace geosdg {

/// Base of every error raised by the library. Each subclass maps to one
/// failure class; the CLI translates them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidValue : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or missing input data. Carries every offending path.
class IngestError : public Error {
 public:
  using Error::Error;
};

class DegenerateFit : public Error {
 public:
  using Error::Error;
};

}  // namespace geosdg
