#pragma once

#include <stdexcept>
#include <string>

namespace rgbdreg {

/// Broad failure class. The CLI maps it onto its exit code.
enum class ErrorKind {
  kInput,      ///< malformed files, bad configuration, dimension mismatches
  kNumerical,  ///< degenerate fits, no correspondences, too few points
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::kInput, what) {}
};

class ConfigError : public InputError {
 public:
  explicit ConfigError(const std::string& what) : InputError("config: " + what) {}
};

class DimensionMismatchError : public InputError {
 public:
  explicit DimensionMismatchError(const std::string& what)
      : InputError("dimension mismatch: " + what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

class DegenerateFitError : public NumericalError {
 public:
  explicit DegenerateFitError(const std::string& what)
      : NumericalError("degenerate fit: " + what) {}
};

class InsufficientPointsError : public NumericalError {
 public:
  explicit InsufficientPointsError(const std::string& what)
      : NumericalError("insufficient points: " + what) {}
};

class NoCorrespondenceError : public NumericalError {
 public:
  explicit NoCorrespondenceError(const std::string& what)
      : NumericalError("no correspondences: " + what) {}
};

}  // namespace rgbdreg
