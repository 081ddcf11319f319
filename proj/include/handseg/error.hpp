#pragma once

#include <stdexcept>
#include <string>

namespace handseg {

enum class ErrorCode {
  kInvalidParameter,
  kMissingFile,
  kDimensionMismatch,
  kMalformedImage,
  kMalformedLabel,
  kMalformedManifest,
  kCalibration,
  kSingleClass,
  kMissingClass,
  kOutOfRange,
  kEmptyInput,
  kIo,
  kConfig,
};

const char* to_string(ErrorCode code);

// All recoverable failures in the library are reported through this type so
// callers (the CLI in particular) can map them to machine-readable summaries.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace handseg
