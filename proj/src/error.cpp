#include "deepdtf/error.hpp"

namespace deepdtf {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kData: return "data";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kUndefinedMetric: return "undefined-metric";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kContract: return "contract";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kNumeric:
      return 4;
    case ErrorKind::kIo:
      return 5;
    default:
      return 3;
  }
}

}  // namespace deepdtf
