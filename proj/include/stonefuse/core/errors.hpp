#pragma once

#include <stdexcept>
#include <string>

namespace stonefuse {

// Invalid configuration or missing required input (CLI exit 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data: manifests, images, checkpoints (CLI exit 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

// Non-finite loss during training (CLI exit 4).
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace stonefuse
