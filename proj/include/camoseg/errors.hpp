#pragma once

#include <stdexcept>
#include <string>

namespace camoseg {

/// Invalid or inconsistent configuration (shapes vs. config, bad toggles, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Caller-supplied data does not satisfy a precondition (shape mismatch, unreadable file).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Synthetic scene generator cannot satisfy its configuration.
class GenerationError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Broken internal invariant; indicates a bug rather than bad input.
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Training aborted (non-finite loss and similar).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace camoseg
