#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace indexprobe {

enum class ErrorCode {
    DuplicateUnit,
    Parse,
    Schema,
    UnresolvableSource,
    Scale,
    MissingParent,
    InsufficientData,
    Method,
    Spec,
    Domain,
    UnitSet,
    DegenerateRanking,
    Record,
    Config,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the toolkit. The code is what callers branch on;
// the message carries the offending unit, column, or path.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

    ErrorCode code() const noexcept { return code_; }
    // The message without the code prefix, for re-wrapping with more context.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace indexprobe
