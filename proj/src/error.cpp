#include "cade/error.hpp"

namespace cade {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::Config: return "config";
    case ErrorKind::MissingFile: return "missing_file";
    case ErrorKind::Registration: return "registration";
    case ErrorKind::ReferenceDetection: return "reference_detection";
    case ErrorKind::Segmentation: return "segmentation";
    case ErrorKind::Architecture: return "architecture";
    case ErrorKind::Generation: return "generation";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace cade
