#pragma once

#include <stdexcept>
#include <string>

namespace trackattr {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (bad JSON/CSV, wrong header). Carries the line number.
struct ParseError : Error {
    ParseError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_number(line) {}
    long line_number;
};

// Well-formed input whose values violate a domain invariant.
struct ValidationError : Error {
    using Error::Error;
};

// Structural inconsistency across records (duplicates, dangling references).
struct IntegrityError : Error {
    using Error::Error;
};

// Tensor shape mismatch; message names the op and both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Bad run configuration: unknown key, out-of-range value, impossible request.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem problem (missing file, failed write).
struct IoError : Error {
    using Error::Error;
};

// NaN/Inf surfaced by an op or optimizer step.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace trackattr
