#pragma once

#include "qsdlab/core/batch.hpp"
#include "qsdlab/core/error.hpp"
#include "qsdlab/core/measure.hpp"
#include "qsdlab/core/stats.hpp"
#include "qsdlab/core/time_grid.hpp"
#include "qsdlab/qsd/conditioned.hpp"

#include <cmath>
#include <vector>

namespace qsdlab::qsd {

/// e^{lambda0 t} P_x(t < tau) along a grid, its plateau (mean over the last
/// third of the resolved instants) and the relative drift across that third.
/// plateau_lo/hi recompute the plateau at the ends of the lambda0 interval.
template <class State>
struct EtaRow {
    State start;
    std::vector<double> t;
    std::vector<double> curve;
    double plateau = 0.0;
    double plateau_lo = 0.0;
    double plateau_hi = 0.0;
    double drift = 0.0;
    bool truncated = false;
};

namespace detail {

inline void eta_plateau(const std::vector<double>& t, const std::vector<double>& s, double lambda0, double& plateau,
                        double& drift) {
    const std::size_t n = t.size();
    const std::size_t from = n - std::max<std::size_t>(n / 3, 1);
    double sum = 0.0;
    for (std::size_t i = from; i < n; ++i) sum += std::exp(lambda0 * t[i]) * s[i];
    plateau = sum / static_cast<double>(n - from);
    const double first = std::exp(lambda0 * t[from]) * s[from];
    const double last = std::exp(lambda0 * t[n - 1]) * s[n - 1];
    drift = plateau != 0.0 ? (last - first) / plateau : 0.0;
}

} // namespace detail

/// Absorbed starts give the zero curve. Instants where fewer than 50 paths
/// survive are dropped (row flagged truncated). Start i runs on rng.child(i).
template <TrajectorySimulator Sim>
std::vector<EtaRow<typename Sim::State>> eta_profile(const Sim& sim, const std::vector<typename Sim::State>& states,
                                                     const TimeGrid& t_grid, std::size_t mc_budget, double lambda0,
                                                     Interval lambda0_ci, const RngStream& rng,
                                                     ExecPolicy policy = ExecPolicy::parallel) {
    using State = typename Sim::State;
    require(lambda0 >= 0.0, "eta_profile: lambda0 must be >= 0");
    require(mc_budget > 0, "eta_profile: zero budget");
    t_grid.validate();
    std::vector<EtaRow<State>> out;
    SimBatchConfig cfg;
    cfg.n_trajectories = mc_budget;
    cfg.horizon = t_grid.last();
    cfg.record_grid = t_grid;
    for (std::size_t k = 0; k < states.size(); ++k) {
        EtaRow<State> row;
        row.start = states[k];
        if (states[k].absorbed()) {
            row.t = t_grid.instants();
            row.curve.assign(row.t.size(), 0.0);
            out.push_back(std::move(row));
            continue;
        }
        std::vector<std::size_t> alive(t_grid.size(), 0);
        for_each_trajectory(
            sim, EmpiricalMeasure<State>::dirac(states[k]), cfg, rng.child(k),
            [&](std::uint64_t, const Trajectory<State>& p) {
                for (std::size_t g = 0; g < t_grid.size(); ++g)
                    if (p.alive_at(g)) ++alive[g];
            },
            policy);
        std::vector<double> s;
        for (std::size_t g = 0; g < t_grid.size(); ++g) {
            if (alive[g] < kReliableSurvivors) {
                row.truncated = true;
                break;
            }
            row.t.push_back(t_grid.at(g));
            s.push_back(static_cast<double>(alive[g]) / static_cast<double>(mc_budget));
            row.curve.push_back(std::exp(lambda0 * row.t.back()) * s.back());
        }
        if (row.t.size() >= 3) {
            double unused = 0.0;
            detail::eta_plateau(row.t, s, lambda0, row.plateau, row.drift);
            detail::eta_plateau(row.t, s, lambda0_ci.lo, row.plateau_lo, unused);
            detail::eta_plateau(row.t, s, lambda0_ci.hi, row.plateau_hi, unused);
        }
        out.push_back(std::move(row));
    }
    return out;
}

} // namespace qsdlab::qsd
