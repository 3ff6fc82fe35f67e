#pragma once

#include <stdexcept>
#include <string>

namespace sdec {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A kernel vanishes where it has to be divided by.
class DegenerateKernel : public Error {
 public:
  using Error::Error;
};

// A per-degree (or per-channel) linear system cannot be inverted.
class SingularSystem : public Error {
 public:
  SingularSystem(const std::string& what, int degree = -1)
      : Error(what), degree_(degree) {}

  // Offending harmonic degree, or -1 when the system is not degree-indexed.
  int degree() const noexcept { return degree_; }

 private:
  int degree_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class GenerationFailure : public Error {
 public:
  using Error::Error;
};

class InitializationFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace sdec
