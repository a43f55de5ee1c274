// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <stdexcept>
#include <string>

namespace catmix {

// Bad input data, bad arguments, shape mismatches. CLI exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Estimation failed (no converged starts, singular systems). CLI exit code 1.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A latent class lost all of its posterior mass during EM.
class DegenerateClassError : public NumericalError {
 public:
  DegenerateClassError(std::size_t cls, const std::string& what)
      : NumericalError(what), cls_(cls) {}
  std::size_t cls() const { return cls_; }

 private:
  std::size_t cls_;
};

}  // namespace catmix
