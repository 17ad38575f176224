#pragma once

#include <stdexcept>
#include <string>

namespace expreg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scalar argument lies outside its admissible domain (n = 0, odd m, δ ∉ (0, 0.1), ...).
class ParameterDomainError : public Error {
 public:
  using Error::Error;
};

/// Shapes or structure of the inputs are inconsistent (dimension mismatch, asymmetric kernel, ...).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// An exponent left the representable range (|<w_r, x_i>| > 700).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A lemma's hypothesis does not hold for the supplied weights.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace expreg
