#include "bbvel/errors.hpp"

namespace bbvel {

Error::Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Fit: return "fit error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Config: return "configuration error";
  }
  return "error";
}

}  // namespace bbvel
