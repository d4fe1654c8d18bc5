#pragma once

#include <stdexcept>
#include <string>

namespace sparsegrain {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// An argument outside the documented domain: bad sparsity target,
/// unsupported granularity, mismatched shapes, malformed config.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

/// A file or payload failed to load or validate: missing blob, short
/// read, non-finite weights, malformed manifest or container.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what) {}
};

} // namespace sparsegrain
