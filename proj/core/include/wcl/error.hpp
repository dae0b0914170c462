#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wcl {

// Bad or missing user input: empty corpora, invalid hyperparameters,
// unreadable files. The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, span out of
// range, overlong input).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Non-finite loss or gradient during training. Exit code 3 in the CLI.
class NumericalDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Statistic is undefined for the given data (e.g. zero variance).
class UndefinedResult : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace wcl
