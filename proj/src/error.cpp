#include "vtok/error.hpp"

namespace vtok {

const char* category_name(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::kInput: return "input";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kIndex: return "index";
    case ErrorCategory::kCorruption: return "corruption";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kTruncation: return "truncation";
    case ErrorCategory::kTableMismatch: return "table-mismatch";
  }
  return "unknown";
}

}  // namespace vtok
