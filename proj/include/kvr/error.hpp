#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kvr {

enum class ErrorKind {
    configuration,
    domain,
    capacity,
    degenerate_input,
    trajectory_too_short,
    usage,
    io,
    validation,
    bad_magic,
    unsupported_version,
    truncated,
    overlapping_offsets,
    malformed,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the toolkit; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace kvr
