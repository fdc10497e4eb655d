#pragma once

#include "qsdlab/core/parallel.hpp"
#include "qsdlab/feller/construction.hpp"
#include "qsdlab/feller/model.hpp"
#include "qsdlab/lyapunov/certificate.hpp"

#include <vector>

namespace qsdlab::feller {

/// Log-uniform tensor grid in rescaled coordinates (every gamma_i = 2).
struct LogGrid {
    double lo = 1e-4;
    double hi = 10.0;
    std::size_t points = 200;  // per axis

    void validate() const;
    std::vector<double> axis() const;
    nlohmann::json to_json() const;
};

/// Default condition-check grid: [1e-4, 10 B_a], 200 points per axis for d = 2, 60 for d >= 3.
LogGrid default_grid(const FellerAssumptionParams& params, std::size_t d);

/// Assumption constants for an LV model (optionally with a competition threshold),
/// computed in rescaled coordinates:
///   a^eta = max_i sup_x (r_i - c_ii (x - K)^+ + x^eta) + 0.1 (at least 0.1),
///   B_a = 1.1 max(2a, max_j 2(r_j + c_jj K)^+ / c_jj),
///   C_a = min(1, min_j c_jj / (2 sum_{i != j} c_ij)),
///   D_a = sum_i (c_ii a - r_i)^+ + B_a sum_{i != j} c_ij + 1.
/// Throws PreconditionError for models without an LV parameterization.
FellerAssumptionParams auto_assumption_params(const FellerModel& model, double eta = 0.5);

/// Grid check of r_i(x) <= a^eta - x_i^eta and of
///   sum_{x_i >= B_a} r_i(x) <= C_a (sum_{x_i <= a} r_i(x) + D_a)
/// on the rescaled model. The grid axis is extended to cover a and B_a.
lyap::CheckCertificate check_feller_assumption(const FellerModel& model, const FellerAssumptionParams& params,
                                               const LogGrid& grid, ExecPolicy policy = ExecPolicy::parallel);

} // namespace qsdlab::feller
