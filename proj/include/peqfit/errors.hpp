#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace peqfit {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A filter or band parameter outside its valid domain.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// A malformed argument to an operation (empty vector, length mismatch...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Text input (CSV, JSON) that could not be parsed. `line` is 1-based, 0 when
// the failure is not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A response that does not attenuate, so no finite reverberation time exists.
class NonDecaying : public Error {
 public:
  using Error::Error;
};

// Non-finite value inside the loss or gradient evaluation.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, std::size_t param_index)
      : Error(what + " (parameter index " + std::to_string(param_index) + ")"),
        param_index_(param_index) {}
  std::size_t param_index() const { return param_index_; }

 private:
  std::size_t param_index_;
};

// Optimization loss became non-finite.
class Divergence : public Error {
 public:
  Divergence(const std::string& what, std::size_t iteration)
      : Error(what + " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

// FDN render produced a non-finite sample.
class Instability : public Error {
 public:
  Instability(const std::string& what, std::size_t sample_index)
      : Error(what + " at sample " + std::to_string(sample_index)),
        sample_index_(sample_index) {}
  std::size_t sample_index() const { return sample_index_; }

 private:
  std::size_t sample_index_;
};

// Energy decay curve too shallow for the T60 regression range.
class InsufficientDecay : public Error {
 public:
  using Error::Error;
};

}  // namespace peqfit
