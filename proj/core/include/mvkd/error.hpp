#pragma once

#include <stdexcept>
#include <string>

namespace mvkd {

enum class ErrorKind {
  InvalidShape,
  ShapeMismatch,
  InvalidParameter,
  PatchMismatch,
  InvalidAxis,
  InvalidBackward,
  InvalidConfig,
  InvalidLabel,
  InvalidDistribution,
  EmptyDataset,
  InvalidDataset,
  DecodeError,
  StratificationError,
  FormatError,
  CorruptCheckpoint,
  UnsupportedModel,
  InvalidTarget,
  IoError,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace mvkd
