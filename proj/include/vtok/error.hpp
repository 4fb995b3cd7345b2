#pragma once

#include <stdexcept>
#include <string>

namespace vtok {

/// Error families. The numeric value doubles as the CLI exit code.
enum class ErrorCategory : int {
  kInput = 3,
  kFormat = 4,
  kIo = 5,
  kIndex = 6,
  kCorruption = 7,
  kConfig = 8,
  kTruncation = 9,
  kTableMismatch = 10,
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

#define VTOK_DEFINE_ERROR(Name, Cat)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(ErrorCategory::Cat, \
                                                   what) {}            \
  };

VTOK_DEFINE_ERROR(InputError, kInput)
VTOK_DEFINE_ERROR(FormatError, kFormat)
VTOK_DEFINE_ERROR(IoError, kIo)
VTOK_DEFINE_ERROR(IndexError, kIndex)
VTOK_DEFINE_ERROR(CorruptionError, kCorruption)
VTOK_DEFINE_ERROR(ConfigError, kConfig)
VTOK_DEFINE_ERROR(TruncationError, kTruncation)
VTOK_DEFINE_ERROR(TableMismatchError, kTableMismatch)

#undef VTOK_DEFINE_ERROR

}  // namespace vtok
