#pragma once

#include <stdexcept>
#include <string>

namespace steerlab {

// Every failure surfaced by the library derives from Error. The category
// decides the CLI exit code (see exit_code_for).
enum class ErrorCategory { usage, data, io };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}
    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

#define STEERLAB_DEFINE_ERROR(Name, Category, Prefix)                  \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& what)                         \
            : Error(ErrorCategory::Category, Prefix + what) {}         \
    };

STEERLAB_DEFINE_ERROR(DimensionError, data, std::string("dimension error: "))
STEERLAB_DEFINE_ERROR(VocabularyError, data, std::string("vocabulary error: "))
STEERLAB_DEFINE_ERROR(TapError, data, std::string("tap error: "))
STEERLAB_DEFINE_ERROR(LengthError, data, std::string("length error: "))
STEERLAB_DEFINE_ERROR(FormatError, data, std::string("format error: "))
STEERLAB_DEFINE_ERROR(IntegrityError, data, std::string("integrity error: "))
STEERLAB_DEFINE_ERROR(IngestionError, data, std::string("ingestion error: "))
STEERLAB_DEFINE_ERROR(CompatibilityError, data, std::string("compatibility error: "))
STEERLAB_DEFINE_ERROR(UsageError, usage, std::string("usage error: "))
STEERLAB_DEFINE_ERROR(IoError, io, std::string("i/o error: "))

#undef STEERLAB_DEFINE_ERROR

/// 2 usage, 3 data/compatibility, 4 I/O.
int exit_code_for(ErrorCategory category) noexcept;

}  // namespace steerlab
