#pragma once

#include <stdexcept>
#include <string>

namespace qsdlab {

/// Raised when an operation is called outside its documented domain
/// (absorbed start state, unnormalized measure, bad parameter range, ...).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine cannot deliver its contract
/// (non-convergence, budget exhaustion, degenerate fit).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Enumeration or work budget exceeded.
class BudgetExceeded : public NumericalError {
public:
    using NumericalError::NumericalError;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw PreconditionError(what);
}

} // namespace qsdlab
