#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wasa {

enum class ErrorKind {
  InvalidArgument,
  CapacityExceeded,
  UnknownProvider,
  WatermarkInInput,
  EmptyCorpus,
  EmptyInput,
  InvalidId,
  RunLongerThanBlock,
  ShapeMismatch,
  IoError,
  FormatVersionMismatch,
  ChecksumMismatch,
  NonFiniteLoss,
  PromptTooLong,
  MissingLexicon,
  InsufficientData,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace wasa
