#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace modeflow {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A chat or encoder endpoint could not be reached or answered with a
/// transport-level failure. `retryable()` is false for failures that will not
/// go away on their own (bad credentials, malformed envelope).
class BackendUnavailable : public Error {
public:
    explicit BackendUnavailable(const std::string& what, bool retryable = true)
        : Error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

/// A model reply did not match the expected JSON shape.
class SchemaViolation : public Error {
public:
    SchemaViolation(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    /// Byte offset into the original reply text of the first failure.
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class NumericalFailure : public Error {
public:
    using Error::Error;
};

class SizeLimitExceeded : public Error {
public:
    using Error::Error;
};

class MissingPrice : public Error {
public:
    using Error::Error;
};

class EmptyUniverse : public Error {
public:
    using Error::Error;
};

class UncoveredDays : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace modeflow
