#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vlink {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or option combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A requested vendor, market, file or artifact does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Input shapes or dimensionalities that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A malformed input record; carries the 1-based line number.
class RecordError : public Error {
 public:
  RecordError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Binary container corruption; carries the byte offset where it was detected.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error("byte offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Optimization diverged.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace vlink
