#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iclb {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file content. Carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

// Structurally valid input that violates a data invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Caller violated an operation precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Bad or incomplete configuration (missing embeddings, unknown provider, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Mathematically undefined request (zero-norm cosine, all-zero entropy, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// External provider failure. `retryable` distinguishes transient faults
// (timeouts, 5xx, connection resets) from permanent ones.
class ProviderError : public Error {
public:
    ProviderError(const std::string& msg, bool retryable, int attempts = 1,
                  int status = 0)
        : Error(msg), retryable_(retryable), attempts_(attempts), status_(status) {}

    bool retryable() const { return retryable_; }
    int attempts() const { return attempts_; }
    int status() const { return status_; }

private:
    bool retryable_ = false;
    int attempts_ = 1;
    int status_ = 0;
};

// Provider cannot satisfy a required capability (e.g. no log-probabilities).
class CapabilityError : public Error {
public:
    using Error::Error;
};

}  // namespace iclb
