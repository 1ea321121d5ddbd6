#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace relrec {

enum class ErrorCode {
    io,
    parse,
    invalid_argument,
    invalid_config,
    empty_dataset,
    out_of_range,
    numeric,
    incompatible,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::io: return "io";
        case ErrorCode::parse: return "parse";
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::invalid_config: return "invalid_config";
        case ErrorCode::empty_dataset: return "empty_dataset";
        case ErrorCode::out_of_range: return "out_of_range";
        case ErrorCode::numeric: return "numeric";
        case ErrorCode::incompatible: return "incompatible";
    }
    return "unknown";
}

// All library failures are reported through this type; the CLI turns the
// code into its one-line error output.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace relrec
