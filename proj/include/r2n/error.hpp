#pragma once

#include <stdexcept>
#include <string>

namespace r2n {

// Every error class maps to a CLI exit code (see exit_code in pipeline.hpp).
enum class ErrorKind {
  kInvalidArgument,
  kParse,
  kEmptyDataset,
  kMissingDomain,
  kUndefinedStatistic,
  kShape,
  kNumeric,
  kMissingArtifact,
  kLocked,
  kIo,
  kFormat,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(ErrorKind::kParse,
              source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline Error invalid_argument(const std::string& what) {
  return Error(ErrorKind::kInvalidArgument, what);
}

}  // namespace r2n
