#pragma once

#include <stdexcept>
#include <string>

namespace m3d {

// Failure classes. The CLI maps them onto process exit codes.
enum class ErrorKind { shape, numeric, io, format, config, state };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

// NaN/Inf produced or consumed, or a degenerate quantity (zero bandwidth,
// zero-variance normalization channel) that makes a result undefined.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::numeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

enum class FormatIssue { bad_magic, truncated, count_mismatch, bad_length, bad_header, version };

class FormatError : public Error {
 public:
  FormatError(FormatIssue issue, const std::string& what)
      : Error(ErrorKind::format, what), issue_(issue) {}
  FormatIssue issue() const noexcept { return issue_; }

 private:
  FormatIssue issue_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::config, what) {}
};

// Misuse of a stateful object, e.g. replaying a consumed tape.
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorKind::state, what) {}
};

}  // namespace m3d
