#pragma once

#include <stdexcept>
#include <string>

namespace cmflow {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid resolution, exponent, index or configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Operands that do not belong together (e.g. a field sampled on another grid).
class UsageError : public Error {
public:
    using Error::Error;
};

// Input outside the domain of the formula: nonpositive h or f, lost convexity.
class DomainError : public Error {
public:
    using Error::Error;
};

// Initial data rejected before a run starts.
class InputError : public Error {
public:
    using Error::Error;
};

// Requested solver mode cannot produce a well-posed system.
class ModeError : public Error {
public:
    using Error::Error;
};

// An invariant that upstream checks should have guaranteed was broken.
class InternalError : public Error {
public:
    using Error::Error;
};

// Output location missing or not writable.
class FilesystemError : public Error {
public:
    using Error::Error;
};

}  // namespace cmflow
