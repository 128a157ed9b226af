#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace excursion {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied parameter (non-positive variance, non-square grid, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Non-conformable shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN where a number is required.
class DomainError : public Error {
public:
    using Error::Error;
};

// Cyclic or otherwise malformed task graph.
class GraphError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Cholesky breakdown. `row` is the global (0-based) row of the first
// non-positive pivot.
class FactorizationError : public Error {
public:
    FactorizationError(std::size_t row, const std::string& what);
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// Warnings go through a replaceable sink so tests can observe them.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

} // namespace excursion
