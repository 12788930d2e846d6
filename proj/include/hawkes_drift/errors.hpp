#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hawkes_drift {

/// Malformed input: bad shapes, out-of-box parameters, invalid configs.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative method ran out of iterations.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, std::size_t iterations)
        : NumericalError(what + " (after " + std::to_string(iterations) + " iterations)"),
          iterations_(iterations) {}

    [[nodiscard]] std::size_t iterations() const noexcept { return iterations_; }

private:
    std::size_t iterations_;
};

/// Model contract broken at run time, e.g. a baseline exceeding its declared envelope.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace hawkes_drift
