#pragma once

#include <stdexcept>
#include <string>

namespace voxfuse {

// Error taxonomy shared by the library and the CLI exit-code mapping.
enum class ErrorCode {
    io_error,
    input_missing,
    unsupported_format,
    corrupt_input,
    invalid_argument,
    invalid_transform,
    invalid_spec,
    incompatible_member,
    incompatible_volumes,
    empty_ensemble,
    empty_domain,
    corrupt_votes,
    undefined_correlation,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace voxfuse
