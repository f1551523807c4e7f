#pragma once

#include <stdexcept>
#include <string>

namespace sconvnet {

/// Base of every error raised by the library. The category decides the CLI
/// exit code (configuration 1, data 2, numeric 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or hyperparameter.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration (e.g. BN in train mode with a batch of one).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor or image shapes that do not fit together.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Bad input data: non-finite samples, incomplete datasets, missing files.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed binary container. The message names the byte offset.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

/// Divergence during training or optimisation.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace sconvnet
