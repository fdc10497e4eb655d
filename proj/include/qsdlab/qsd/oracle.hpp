#pragma once

#include "qsdlab/bd/model.hpp"
#include "qsdlab/bd/truncation.hpp"
#include "qsdlab/core/parallel.hpp"
#include "qsdlab/qsd/estimate.hpp"

#include <vector>

namespace qsdlab::qsd {

/// Principal left and right eigenvectors of the killed generator Q~ on a box.
/// nu is the QSD of the truncated chain (sums to 1), eta the right
/// eigenvector normalized by nu . eta = 1, lambda0 = -(principal eigenvalue).
struct EigenOracle {
    std::vector<Count> box;
    std::vector<double> nu;
    std::vector<double> eta;
    double lambda0 = 0.0;
    double residual = 0.0;        // || nu Q~ + lambda0 nu ||_1
    double eta_residual = 0.0;    // || Q~ eta + lambda0 eta ||_inf / || eta ||_inf
    std::size_t iterations = 0;
    double shell_mass = 0.0;      // nu-mass with some n_i > 0.9 box_i

    QSDEstimate<DiscreteState> estimate(const bd::Truncation& tr) const;
    nlohmann::json to_json() const;
};

inline constexpr std::size_t kOracleMaxIterations = 100'000;

/// Power iteration on the uniformized kernel I + Q~/Lambda (Lambda slightly
/// above the largest exit rate so the kernel is aperiodic), stopped when the
/// estimated l1 distance of the normalized iterate to its limit, change / (1 - ratio
/// of successive changes), is below `tol`. Throws PreconditionError
/// naming an unreachable state when the box is reducible and NumericalError
/// after `max_iter` iterations.
EigenOracle qsd_eigen_oracle(const bd::Truncation& tr, double tol = 1e-12,
                             std::size_t max_iter = kOracleMaxIterations,
                             ExecPolicy policy = ExecPolicy::parallel);

/// Mass of nu on states with some coordinate above 0.9 box_i.
double outer_shell_mass(const bd::Truncation& tr, const std::vector<double>& nu);

/// Starts from `initial_box` and multiplies every side by 1.5 (rounded up)
/// until the outer-shell mass is below `shell_tol`. Throws NumericalError
/// when a side would exceed `max_side`.
EigenOracle qsd_eigen_oracle_auto(const bd::BDModel& model, std::vector<Count> initial_box,
                                  double shell_tol = 1e-6, Count max_side = 400, double tol = 1e-12,
                                  ExecPolicy policy = ExecPolicy::parallel);

/// nu e^{t Q~} renormalized, for the fixed-point check.
std::vector<double> propagate_conditioned(const bd::Truncation& tr, const std::vector<double>& nu, double t,
                                          ExecPolicy policy = ExecPolicy::parallel);

/// Box vector (indexed like the truncation) as a compacted measure.
EmpiricalMeasure<DiscreteState> box_measure(const bd::Truncation& tr, const std::vector<double>& w);

/// sum_i |p_i - q_i| for two box vectors.
double tv_box(const std::vector<double>& p, const std::vector<double>& q);

} // namespace qsdlab::qsd
