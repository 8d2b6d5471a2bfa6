#pragma once

#include <stdexcept>
#include <string>

namespace hep {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A voxel-map action that cannot be realized as an exact index permutation.
class InexactTransform : public Error {
 public:
  using Error::Error;
};

/// A binary container could not be decoded.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFile : public FormatError {
 public:
  using FormatError::FormatError;
};

class FeatureWidthMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnknownMagic : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Non-finite values appeared during a numerical procedure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace hep
