#pragma once

#include <stdexcept>
#include <string>

namespace voxboost {

// Bad arguments or data handed to a numerical routine.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Configuration that cannot be honoured (bad ranges, unknown keys, rank-deficient design).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File system / environment failures. The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A broken internal invariant, e.g. a pooling index that points outside its input.
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace voxboost
