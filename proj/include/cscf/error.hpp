#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cscf {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dimensions of two operands disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A scalar argument violates its precondition (mu <= 0, even kernel, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Malformed file contents. Carries the byte offset at which parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string &what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Ridge system could not be factored (singular normal matrix).
class SingularSystemError : public Error {
public:
    using Error::Error;
};

} // namespace cscf
