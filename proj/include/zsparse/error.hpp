#pragma once

#include <stdexcept>
#include <string>

namespace zsparse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Extents of two operands (or an operand and a config) do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A configuration value is outside its documented domain.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A value that must be finite was NaN or infinite.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Reading or writing an SPTN file failed.
class TensorFileError : public Error {
public:
    enum class Kind { io, bad_magic, bad_version, bad_dtype, bad_shape, truncated, trailing_bytes };

    TensorFileError(Kind kind, const std::string& path, const std::string& what)
        : Error(path + ": " + what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace zsparse
