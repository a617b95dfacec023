#pragma once

#include <stdexcept>
#include <string>

namespace segloc {

enum class ErrorKind {
    InvalidArgument,
    InvalidPlacement,
    DegenerateSegment,
    EmptyRegion,
    Ingest,
    CorpusInvalid,
    Io,
    Synthesis,
    Contract,
    EmptyNegatives,
    Initialization,
    InvalidDataset,
    Checkpoint,
};

const char* error_kind_name(ErrorKind kind);

/// Single exception type for the whole library; `kind()` tells callers
/// which contract was violated.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

} // namespace segloc
