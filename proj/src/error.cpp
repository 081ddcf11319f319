#include "handseg/error.hpp"

namespace handseg {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidParameter: return "invalid_parameter";
    case ErrorCode::kMissingFile: return "missing_file";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kMalformedImage: return "malformed_image";
    case ErrorCode::kMalformedLabel: return "malformed_label";
    case ErrorCode::kMalformedManifest: return "malformed_manifest";
    case ErrorCode::kCalibration: return "calibration";
    case ErrorCode::kSingleClass: return "single_class";
    case ErrorCode::kMissingClass: return "missing_class";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace handseg
