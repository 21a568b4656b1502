#pragma once

#include <stdexcept>
#include <string>

namespace udtwin {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text (CSV/PLY/config rows). Carries a line number where known.
class ParseError : public Error {
public:
    using Error::Error;
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

// Data or configuration violates a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// An argument value is outside its documented domain.
class ParameterError : public Error {
public:
    using Error::Error;
};

// Operation is illegal in the object's current state.
class StateError : public Error {
public:
    using Error::Error;
};

// A point or box falls outside the geometric domain.
class GeometryError : public Error {
public:
    using Error::Error;
};

// Schema definition is inconsistent (duplicate, dangling parent, cycle, ...).
class SchemaError : public Error {
public:
    using Error::Error;
};

// Request exceeds a hard size or budget limit.
class CapacityError : public Error {
public:
    using Error::Error;
};

// A regression problem is rank-deficient.
class RankError : public Error {
public:
    using Error::Error;
};

// Filesystem failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace udtwin
