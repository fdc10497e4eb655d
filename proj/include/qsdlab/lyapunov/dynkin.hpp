#pragma once

#include "qsdlab/bd/truncation.hpp"
#include "qsdlab/core/time_grid.hpp"
#include "qsdlab/lyapunov/pair.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace qsdlab::lyap {

/// Both sides of
///   E_x V(X_t) / E_x phi(X_t) = V(x)/phi(x)
///       + int_0^t [E_x LV(X_s) / E_x phi(X_s) - E_x V(X_s) E_x Lphi(X_s) / E_x phi(X_s)^2] ds
/// for the chain killed outside a truncation box. V and phi are the pair's
/// values on the box states; LV and Lphi are Q~V and Q~phi for the killed
/// generator, so the identity is exact and the residual measures the
/// trapezoid quadrature alone.
struct DynkinReport {
    std::vector<double> t;
    std::vector<double> lhs;
    std::vector<double> rhs;
    std::vector<double> residual;
    double max_residual = 0.0;
    double quad_step = 0.0;

    nlohmann::json to_json() const;
};

/// Every t_grid instant must be a multiple of quad_step.
DynkinReport verify_dynkin_identity(const bd::Truncation& tr, const LyapunovPair<DiscreteState>& pair,
                                    const DiscreteState& x, const TimeGrid& t_grid, double quad_step,
                                    ExecPolicy policy = ExecPolicy::parallel);

} // namespace qsdlab::lyap
