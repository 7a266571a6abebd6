#pragma once

#include <stdexcept>
#include <string>

namespace fedskew {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid knob values: bad dimensions, non-positive rates, batch size
/// larger than the data it must draw from, malformed experiment configs.
/// Carries the offending config field when known.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message, std::string field = {})
        : Error(message), field_(std::move(field)) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Mismatched tensor or distribution shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Bad data contents: labels out of range, empty classes, infeasible
/// partitions, degenerate reference weights.
class DataError : public Error {
public:
    using Error::Error;
};

/// Unreadable or malformed input files.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace fedskew
