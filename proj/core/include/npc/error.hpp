#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace npc {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or model geometry disagreement.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed or unsupported container bytes. Carries the offending byte offset.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// A decision graph was paired with a model whose content hash differs.
class HashMismatchError : public Error {
public:
    using Error::Error;
};

/// Caller passed an argument outside its documented range.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace npc
