#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bicon {

// Shape or length mismatch between arguments.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain (off the simplex, non-finite, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A documented precondition on the inputs does not hold.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Configuration file or CLI value rejected.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Non-finite value or failed iteration. `index` is the row, step or element
// the failure was detected at.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, std::size_t index)
        : std::runtime_error(what), index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

}  // namespace bicon
