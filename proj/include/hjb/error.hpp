#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hjb {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied something the operation cannot accept: bad configuration,
/// violated preconditions, malformed expressions. Maps to CLI exit code 2.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A computation ran but did not reach its contract (no admissible delta,
/// non-convergence, NaN). Maps to CLI exit code 1.
class NumericalError : public Error {
public:
    using Error::Error;
};

class ParseError : public PreconditionError {
public:
    ParseError(const std::string& what, std::size_t offset)
        : PreconditionError(what + " at offset " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Evaluation fault: unbound variable or a numeric domain fault (log of a
/// non-positive value, division by zero, ...). Carries the offending
/// sub-expression in printed form.
class EvalError : public PreconditionError {
public:
    EvalError(const std::string& what, std::string subexpr)
        : PreconditionError(what + " in '" + subexpr + "'"), subexpr_(std::move(subexpr)) {}

    const std::string& subexpression() const noexcept { return subexpr_; }

private:
    std::string subexpr_;
};

}  // namespace hjb
