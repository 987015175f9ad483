#ifndef CASCADE_ERRORS_HPP
#define CASCADE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cascade {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed case or config text. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Well-formed input that violates a data invariant (unknown bus, x <= 0, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A connected component whose injections do not sum to zero.
class BalanceError : public Error {
public:
    BalanceError(std::size_t component, double residual)
        : Error("component " + std::to_string(component) + " unbalanced, residual " +
                std::to_string(residual)),
          component_(component),
          residual_(residual) {}

    std::size_t component() const noexcept { return component_; }
    double residual() const noexcept { return residual_; }

private:
    std::size_t component_;
    double residual_;
};

/// Singular or ill-posed linear structure (missing reference, singular pinned system).
class StructuralError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace cascade

#endif
