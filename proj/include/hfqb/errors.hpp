#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hfqb {

// Physically meaningless request (coupling that cannot exist, B != 0 with no
// quadrupole moment, ...).
struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad value passed by the caller (negative noise, malformed config, ...).
struct invalid_argument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input text; carries the 1-based line (and column when known).
struct parse_error : std::runtime_error {
  parse_error(const std::string& what, std::size_t line, std::size_t column = 0)
      : std::runtime_error("line " + std::to_string(line) +
                           (column ? ", column " + std::to_string(column) : std::string{}) +
                           ": " + what),
        line(line),
        column(column) {}
  std::size_t line;
  std::size_t column;
};

// Well-formed input that violates a dataset rule (sigma <= 0, duplicate index, ...).
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The optimizer could not reach a minimum from any configured start.
struct convergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A profile scan failed to bracket the requested confidence level.
struct profile_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hfqb
