#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace anonymixer {

/// Failure categories. The CLI maps them onto exit codes.
enum class ErrorKind {
    usage,
    io,
    schema,
    parse,
    empty_input,
    empty_result,
    parameter,
    shape,
    contract,
    undefined_metric,
    no_valid_params,
    numeric,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return "usage error";
        case ErrorKind::io: return "i/o error";
        case ErrorKind::schema: return "schema error";
        case ErrorKind::parse: return "parse error";
        case ErrorKind::empty_input: return "empty-input error";
        case ErrorKind::empty_result: return "empty-result error";
        case ErrorKind::parameter: return "parameter error";
        case ErrorKind::shape: return "shape error";
        case ErrorKind::contract: return "contract error";
        case ErrorKind::undefined_metric: return "undefined-metric error";
        case ErrorKind::no_valid_params: return "no-valid-params error";
        case ErrorKind::numeric: return "numeric error";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

/// Process exit code for an error: 1 usage, 3 numeric, 2 everything else.
inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return 1;
        case ErrorKind::numeric: return 3;
        default: return 2;
    }
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) throw Error(kind, message);
}

}  // namespace anonymixer
