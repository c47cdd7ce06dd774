#include "mvkd/error.hpp"

namespace mvkd {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidShape: return "InvalidShape";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidParameter: return "InvalidParameter";
    case ErrorKind::PatchMismatch: return "PatchMismatch";
    case ErrorKind::InvalidAxis: return "InvalidAxis";
    case ErrorKind::InvalidBackward: return "InvalidBackward";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidLabel: return "InvalidLabel";
    case ErrorKind::InvalidDistribution: return "InvalidDistribution";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::InvalidDataset: return "InvalidDataset";
    case ErrorKind::DecodeError: return "DecodeError";
    case ErrorKind::StratificationError: return "StratificationError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::UnsupportedModel: return "UnsupportedModel";
    case ErrorKind::InvalidTarget: return "InvalidTarget";
    case ErrorKind::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace mvkd
