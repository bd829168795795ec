#pragma once

#include <cstddef>
#include <utility>
#include <stdexcept>
#include <string>
#include <variant>

#include "grpolab/law_params.hpp"

namespace grpolab {

/// Caller supplied a value outside an operation's domain (bad ids, sizes,
/// non-monotone steps, invalid configuration).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A quantity that must be strictly positive (a probability, a ratio) was not.
class NumericDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed text in a persisted file. `line()` is 1-based; 0 when the
/// error is not attributable to a single line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A file could not be opened for reading or writing.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed text that is missing required content.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A curve fit failed. Carries the best parameters reached before giving up,
/// when there were any.
class FitError : public std::runtime_error {
 public:
  enum class Kind { kDegenerateData, kNotConverged };

  using BestSoFar = std::variant<std::monostate, SigmoidLawParams, PowerLawParams>;

  FitError(Kind kind, const std::string& what, BestSoFar best = {})
      : std::runtime_error(what), kind_(kind), best_(std::move(best)) {}

  Kind kind() const noexcept { return kind_; }
  const BestSoFar& best_so_far() const noexcept { return best_; }

 private:
  Kind kind_;
  BestSoFar best_;
};

}  // namespace grpolab
