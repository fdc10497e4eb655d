#pragma once

#include "qsdlab/core/error.hpp"
#include "qsdlab/core/measure.hpp"
#include "qsdlab/core/parallel.hpp"
#include "qsdlab/core/rng.hpp"
#include "qsdlab/core/state.hpp"
#include "qsdlab/core/time_grid.hpp"

#include <concepts>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace qsdlab {

struct SimBatchConfig {
    std::size_t n_trajectories = 1;
    double horizon = 1.0;
    std::uint64_t max_events = 10'000'000;  // explosion guard (events or steps)
    TimeGrid record_grid{};

    void validate() const {
        record_grid.validate();
        require(n_trajectories > 0, "SimBatchConfig: n_trajectories must be positive");
        require(horizon > 0.0 && std::isfinite(horizon), "SimBatchConfig: horizon must be > 0");
        require(max_events > 0, "SimBatchConfig: guard must be positive");
        require(horizon >= record_grid.last() * (1.0 - 1e-12),
                "SimBatchConfig: horizon must cover the last record instant");
    }
};

enum class TrajectoryStatus { absorbed, censored, guard_tripped };

constexpr std::string_view to_string(TrajectoryStatus s) noexcept {
    switch (s) {
        case TrajectoryStatus::absorbed: return "absorbed";
        case TrajectoryStatus::censored: return "censored";
        case TrajectoryStatus::guard_tripped: return "guard_tripped";
    }
    return "unknown";
}

/// One simulated path. `states[g]` is the state at record instant g; a
/// guard-tripped path only carries the instants reached before the trip.
template <class State>
struct Trajectory {
    std::vector<State> states;
    TrajectoryStatus status = TrajectoryStatus::censored;
    double absorption_time = std::numeric_limits<double>::infinity();
    std::uint64_t events = 0;

    bool alive_at(std::size_t g) const { return g < states.size() && !states[g].absorbed(); }
};

template <class State>
struct TrajectoryBatch {
    SimBatchConfig config;
    std::size_t dimension = 0;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::vector<Trajectory<State>> trajectories;
};

/// A model-specific path simulator: given a start state, a config and the
/// trajectory's own stream, produce the recorded path.
template <class Sim>
concept TrajectorySimulator = requires(const Sim& sim, const typename Sim::State& x, const SimBatchConfig& cfg,
                                       RngStream& rng) {
    typename Sim::State;
    { sim.simulate(x, cfg, rng) } -> std::same_as<Trajectory<typename Sim::State>>;
    { sim.dimension() } -> std::convertible_to<std::size_t>;
};

template <class State>
void require_alive_support(const EmpiricalMeasure<State>& init, std::size_t d) {
    require(!init.empty(), "initial law is empty");
    for (const auto& a : init.atoms()) {
        require(a.state.dimension() == d, "initial law: state dimension does not match the model");
        if (a.weight > 0.0 && a.state.absorbed()) {
            throw PreconditionError("initial law charges the absorbed state " + to_string(a.state));
        }
    }
}

/// Simulates trajectories [first, last); trajectory i uses rng.child(i) both
/// to draw its start state from `init` and to drive its dynamics. Results are
/// written to out[i - first].
template <TrajectorySimulator Sim>
void simulate_range(const Sim& sim, const EmpiricalMeasure<typename Sim::State>& init, const SimBatchConfig& cfg,
                    const RngStream& rng, std::uint64_t first, std::uint64_t last,
                    std::vector<Trajectory<typename Sim::State>>& out, ExecPolicy policy) {
    const MeasureSampler<typename Sim::State> sampler(init);
    out.assign(last - first, {});
    parallel_for(policy, static_cast<std::int64_t>(last - first), [&](std::int64_t k) {
        RngStream stream = rng.child(first + static_cast<std::uint64_t>(k));
        const auto& x0 = sampler.draw(stream);
        out[static_cast<std::size_t>(k)] = sim.simulate(x0, cfg, stream);
    });
}

template <TrajectorySimulator Sim>
TrajectoryBatch<typename Sim::State> simulate_batch(const Sim& sim, const EmpiricalMeasure<typename Sim::State>& init,
                                                    const SimBatchConfig& cfg, const RngStream& rng,
                                                    ExecPolicy policy = ExecPolicy::parallel) {
    cfg.validate();
    require_alive_support(init, sim.dimension());
    TrajectoryBatch<typename Sim::State> batch;
    batch.config = cfg;
    batch.dimension = sim.dimension();
    batch.seed = rng.seed();
    batch.stream_id = rng.stream_id();
    simulate_range(sim, init, cfg, rng, 0, cfg.n_trajectories, batch.trajectories, policy);
    return batch;
}

/// Streams trajectories through `sink(index, trajectory)` in index order,
/// simulating `chunk` at a time so large batches never sit in memory.
template <TrajectorySimulator Sim, class Sink>
void for_each_trajectory(const Sim& sim, const EmpiricalMeasure<typename Sim::State>& init, const SimBatchConfig& cfg,
                         const RngStream& rng, Sink&& sink, ExecPolicy policy = ExecPolicy::parallel,
                         std::uint64_t chunk = 4096) {
    cfg.validate();
    require_alive_support(init, sim.dimension());
    std::vector<Trajectory<typename Sim::State>> buf;
    for (std::uint64_t first = 0; first < cfg.n_trajectories; first += chunk) {
        const std::uint64_t last = std::min<std::uint64_t>(first + chunk, cfg.n_trajectories);
        simulate_range(sim, init, cfg, rng, first, last, buf, policy);
        for (std::uint64_t i = first; i < last; ++i) sink(i, buf[i - first]);
    }
}

} // namespace qsdlab
