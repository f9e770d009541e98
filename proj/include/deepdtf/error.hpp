#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deepdtf {

// Error categories. The CLI maps each to a process exit code.
enum class ErrorKind {
  kUsage,
  kConfig,
  kData,
  kParse,
  kDimension,
  kNumeric,
  kUndefinedMetric,
  kCapacity,
  kIo,
  kContract,
};

const char* to_string(ErrorKind kind);

// Exit codes: 0 ok, 2 usage, 3 data, 4 numeric, 5 IO.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(ErrorKind::kDimension, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what)
      : Error(ErrorKind::kUndefinedMetric, what) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what)
      : Error(ErrorKind::kCapacity, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error(ErrorKind::kContract, what) {}
};

// Parse failure with the byte offset into the input where it was detected.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& reason)
      : Error(ErrorKind::kParse,
              "parse error at offset " + std::to_string(offset) + ": " + reason),
        offset_(offset),
        reason_(reason) {}
  std::size_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

}  // namespace deepdtf
