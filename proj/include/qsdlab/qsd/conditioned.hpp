#pragma once

#include "qsdlab/core/batch.hpp"
#include "qsdlab/core/error.hpp"
#include "qsdlab/core/measure.hpp"
#include "qsdlab/core/time_grid.hpp"

#include <map>
#include <type_traits>
#include <vector>

namespace qsdlab::qsd {

/// Laws below this many survivors are flagged unreliable.
inline constexpr std::size_t kReliableSurvivors = 50;

/// P_mu(X_t in . | t < tau) on a grid, from n_traj independent paths.
/// `laws[g]` is normalized, or empty when nobody survived; the curve is
/// truncated at the first such instant (`resolved` instants are usable).
template <class State>
struct ConditionedLaws {
    TimeGrid grid;
    std::size_t n_traj = 0;
    std::vector<std::size_t> survivors;
    std::vector<EmpiricalMeasure<State>> laws;
    std::vector<bool> reliable;
    std::size_t resolved = 0;
    std::size_t guard_tripped = 0;

    bool truncated() const noexcept { return resolved < grid.size(); }

    /// Fraction of paths alive at each instant.
    std::vector<double> survival() const {
        std::vector<double> s(survivors.size());
        for (std::size_t g = 0; g < s.size(); ++g)
            s[g] = static_cast<double>(survivors[g]) / static_cast<double>(n_traj);
        return s;
    }
};

/// Trajectory i starts from a draw of `init` and runs on rng.child(i).
/// Discrete laws are merged by state while streaming; continuous laws keep
/// one atom per survivor.
template <TrajectorySimulator Sim>
ConditionedLaws<typename Sim::State> conditioned_mc(const Sim& sim, const EmpiricalMeasure<typename Sim::State>& init,
                                                    const TimeGrid& t_grid, std::size_t n_traj, const RngStream& rng,
                                                    ExecPolicy policy = ExecPolicy::parallel,
                                                    std::uint64_t max_events = 100'000'000) {
    using State = typename Sim::State;
    constexpr bool discrete = std::is_same_v<State, DiscreteState>;
    require(n_traj >= 1000, "conditioned_mc: need at least 1000 trajectories");
    t_grid.validate();
    SimBatchConfig cfg;
    cfg.n_trajectories = n_traj;
    cfg.horizon = t_grid.last();
    cfg.record_grid = t_grid;
    cfg.max_events = max_events;
    const std::size_t ng = t_grid.size();

    ConditionedLaws<State> out;
    out.grid = t_grid;
    out.n_traj = n_traj;
    out.survivors.assign(ng, 0);
    std::vector<std::map<State, double>> counts(discrete ? ng : 0);
    std::vector<EmpiricalMeasure<State>> raw(discrete ? 0 : ng);
    for_each_trajectory(
        sim, init, cfg, rng,
        [&](std::uint64_t, const Trajectory<State>& path) {
            if (path.status == TrajectoryStatus::guard_tripped) ++out.guard_tripped;
            for (std::size_t g = 0; g < path.states.size(); ++g) {
                if (path.states[g].absorbed()) break;
                ++out.survivors[g];
                if constexpr (discrete) {
                    counts[g][path.states[g]] += 1.0;
                } else {
                    raw[g].add(path.states[g], 1.0);
                }
            }
        },
        policy);

    out.laws.resize(ng);
    out.reliable.assign(ng, false);
    out.resolved = ng;
    for (std::size_t g = 0; g < ng; ++g) {
        if (out.survivors[g] == 0) {
            out.resolved = std::min(out.resolved, g);
            continue;
        }
        if constexpr (discrete) {
            EmpiricalMeasure<State> m;
            m.reserve(counts[g].size());
            for (const auto& [s, c] : counts[g]) m.add(s, c);
            out.laws[g] = m.normalized();
        } else {
            out.laws[g] = raw[g].normalized();
        }
        out.reliable[g] = out.survivors[g] >= kReliableSurvivors;
    }
    return out;
}

} // namespace qsdlab::qsd
