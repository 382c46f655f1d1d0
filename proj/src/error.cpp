#include "kvr/error.hpp"

namespace kvr {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::configuration: return "configuration";
        case ErrorKind::domain: return "domain";
        case ErrorKind::capacity: return "capacity";
        case ErrorKind::degenerate_input: return "degenerate-input";
        case ErrorKind::trajectory_too_short: return "trajectory-too-short";
        case ErrorKind::usage: return "usage";
        case ErrorKind::io: return "io";
        case ErrorKind::validation: return "validation";
        case ErrorKind::bad_magic: return "bad-magic";
        case ErrorKind::unsupported_version: return "unsupported-version";
        case ErrorKind::truncated: return "truncated";
        case ErrorKind::overlapping_offsets: return "overlapping-offsets";
        case ErrorKind::malformed: return "malformed";
    }
    return "unknown";
}

}  // namespace kvr
