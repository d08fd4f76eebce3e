#pragma once

#include <stdexcept>
#include <string>

namespace asterenv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed configuration, graph assumptions violated, bad CSV rows.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure while fitting or transforming parameters.
class NumericalError : public Error {
 public:
  enum class Kind { Domain, Overflow, NonConvergence, Boundary, RankDeficient, IllConditioned, Multiplicity };

  NumericalError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace asterenv
