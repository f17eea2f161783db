#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pathprof {

// Bad arguments, incompatible objects, out-of-range indices. CLI exit code 1.
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed files. Carries the byte offset where parsing gave up. CLI exit code 1.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t byte_offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}
    std::uint64_t byte_offset() const { return byte_offset_; }

private:
    std::uint64_t byte_offset_;
};

// Non-finite values produced mid-computation (overflow, NaN propagation).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A contract the library itself guarantees was broken; indicates a bug, not bad input.
class InternalInvariantError : public std::logic_error {
public:
    explicit InternalInvariantError(const std::string& what) : std::logic_error(what) {}
};

// I/O failures, surfaced with the offending path.
class IoError : public std::runtime_error {
public:
    IoError(const std::string& what, const std::string& path)
        : std::runtime_error(what + ": " + path) {}
};

}  // namespace pathprof
