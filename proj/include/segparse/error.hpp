#pragma once

#include <stdexcept>
#include <string>

namespace segparse {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Split location outside the legal interior of a region.
class InvalidSplitError : public Error {
public:
    using Error::Error;
};

// Region (or pixel) access outside the owning grid.
class BoundsError : public Error {
public:
    using Error::Error;
};

// Operation applied to a node in the wrong state (e.g. expanding a terminal).
class StateError : public Error {
public:
    using Error::Error;
};

// Action violates the grammar at this node (depth cap, 1-px split, ...).
class IllegalActionError : public Error {
public:
    using Error::Error;
};

// Tree still has pending nodes where a complete tree is required.
class IncompleteTreeError : public Error {
public:
    using Error::Error;
};

// Entropy of an empty pixel set.
class EmptyRegionError : public Error {
public:
    using Error::Error;
};

// File / directory problems.
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite math is required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed configuration input.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace segparse
