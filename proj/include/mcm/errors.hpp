#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcm {

/// Malformed input text (molecule records, config files, CSV rows).
/// `position` is a 0-based character offset or line number depending on the
/// producer; npos when not applicable.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t position = npos)
      : std::runtime_error(what), position_(position) {}

  std::size_t position() const noexcept { return position_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
  std::size_t position_;
};

/// Inputs that parse but are inconsistent with each other (unknown ids,
/// index out of range, config/data mismatch).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Math domain violation during tape recording (log of nonpositive input,
/// division by zero).
class DomainError : public std::domain_error {
public:
  DomainError(const std::string& what, int node)
      : std::domain_error(what), node_(node) {}

  int node() const noexcept { return node_; }

private:
  int node_;
};

/// Non-finite loss or gradient encountered while optimizing.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace mcm
