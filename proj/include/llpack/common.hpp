#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace llpack {

// Error taxonomy. The CLI maps these onto exit codes, so the split between
// format errors (bad bytes on disk) and shape/config errors (bad call) is
// part of the public contract.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Illegal tensor dimensions or mismatched operand shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Values outside a documented input domain (e.g. histogram input not in [0,1]).
struct DomainError : Error {
    using Error::Error;
};

// Invalid model/CLI configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed container bytes; carries the byte offset of the first bad byte.
struct FormatError : Error {
    std::size_t offset = 0;
    FormatError(const std::string& msg, std::size_t off)
        : Error(msg + " (offset " + std::to_string(off) + ")"), offset(off) {}
};

// A named parameter missing from a WeightStore, or a store/model mismatch.
struct WeightError : Error {
    using Error::Error;
};

// API misuse that is a programming error, not a data error
// (e.g. backward() from a non-scalar root).
struct ContractError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace llpack
