#pragma once

#include <stdexcept>
#include <string>

namespace graft {

// Bad inputs: malformed files, schema mismatches, invalid configuration.
// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class SchemaError : public ValidationError {
public:
    explicit SchemaError(const std::string& what) : ValidationError(what) {}
};

class ParseError : public ValidationError {
public:
    explicit ParseError(const std::string& what) : ValidationError(what) {}
};

class ConfigError : public ValidationError {
public:
    explicit ConfigError(const std::string& what) : ValidationError(what) {}
};

// Failures during computation (degenerate distributions, non-convergence).
// The CLI maps these to exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace graft
