#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hfnrv {

/// Shape mismatch, bad configuration value or out-of-range index.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// An operation produced NaN or Inf.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Missing, unreadable or inconsistent file.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Broken internal contract (e.g. a gradient that should exist does not).
class InternalError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

enum class ParseErrorKind { BadMagic, BadVersion, Truncated, Checksum, Malformed, BadCode };

/// Failure while decoding a byte or bit stream; `offset` is in bytes for
/// containers and in bits for entropy-coded payloads.
class ParseError : public std::runtime_error {
public:
  ParseError(ParseErrorKind kind, std::size_t offset, const std::string& what)
      : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"),
        kind_(kind), offset_(offset) {}

  [[nodiscard]] ParseErrorKind kind() const noexcept { return kind_; }
  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
  ParseErrorKind kind_;
  std::size_t offset_;
};

}  // namespace hfnrv
