#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wsindex {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loaded or constructed value violates a documented invariant.
/// `rule()` names the violated rule so callers can report it verbatim.
class ValidationError : public Error {
 public:
  ValidationError(std::string rule, const std::string& detail)
      : Error(rule + ": " + detail), rule_(std::move(rule)) {}

  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string rule_;
};

/// Malformed input file or byte stream. `offset()` is a byte offset for XML
/// and a 1-based line number for line-oriented formats (see `unit()`).
class ParseError : public Error {
 public:
  enum class Unit { Byte, Line };

  ParseError(const std::string& what, std::size_t offset, Unit unit)
      : Error(what + (unit == Unit::Byte ? " (at byte " : " (at line ") +
              std::to_string(offset) + ")"),
        offset_(offset),
        unit_(unit) {}

  std::size_t offset() const noexcept { return offset_; }
  Unit unit() const noexcept { return unit_; }

 private:
  std::size_t offset_;
  Unit unit_;
};

class NetworkError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace wsindex
