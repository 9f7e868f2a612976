#pragma once

#include <stdexcept>
#include <string>

namespace hef {

/// Broad failure category. The CLI maps `config` to exit code 1 and
/// everything else to exit code 2.
enum class ErrorKind {
    config,     // bad or missing configuration, credentials, arguments
    data,       // malformed input files or schema violations
    numeric,    // divergence, non-finite values
    transport,  // network failures after retries
    protocol,   // unexpected response status or body
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace hef
