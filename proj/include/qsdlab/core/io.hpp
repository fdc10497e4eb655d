#pragma once

#include "qsdlab/core/batch.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>

namespace qsdlab {

/// Round-trip decimal rendering; identical doubles give identical text.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string format_coord(Count x) { return std::to_string(x); }
inline std::string format_coord(double x) { return format_double(x); }

/// Columnar CSV: trajectory_id, grid_index, time, coord_0..coord_{d-1}, absorbed_flag.
template <class State>
void write_batch_csv(const TrajectoryBatch<State>& batch, std::ostream& os) {
    os << "trajectory_id,grid_index,time";
    for (std::size_t i = 0; i < batch.dimension; ++i) os << ",coord_" << i;
    os << ",absorbed_flag\n";
    const auto& grid = batch.config.record_grid;
    for (std::size_t id = 0; id < batch.trajectories.size(); ++id) {
        const auto& tr = batch.trajectories[id];
        for (std::size_t g = 0; g < tr.states.size(); ++g) {
            os << id << ',' << g << ',' << format_double(grid.at(g));
            for (auto c : tr.states[g].coords) os << ',' << format_coord(c);
            os << ',' << (tr.states[g].absorbed() ? 1 : 0) << '\n';
        }
    }
}

template <class State>
nlohmann::json batch_sidecar(const TrajectoryBatch<State>& batch) {
    using nlohmann::json;
    const auto& cfg = batch.config;
    json j;
    j["seed"] = batch.seed;
    j["stream_id"] = batch.stream_id;
    j["dimension"] = batch.dimension;
    j["config"] = {{"n_trajectories", cfg.n_trajectories},
                   {"horizon", cfg.horizon},
                   {"max_events", cfg.max_events},
                   {"record_grid", {{"t0", cfg.record_grid.t0}, {"dt", cfg.record_grid.dt},
                                    {"n_steps", cfg.record_grid.n_steps}}}};
    json rows = json::array();
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t id = 0; id < batch.trajectories.size(); ++id) {
        const auto& tr = batch.trajectories[id];
        counts[static_cast<int>(tr.status)]++;
        json r = {{"id", id}, {"status", std::string(to_string(tr.status))}, {"events", tr.events}};
        if (tr.status == TrajectoryStatus::absorbed) r["absorption_time"] = tr.absorption_time;
        rows.push_back(std::move(r));
    }
    j["summary"] = {{"absorbed", counts[0]}, {"censored", counts[1]}, {"guard_tripped", counts[2]}};
    j["trajectories"] = std::move(rows);
    return j;
}

/// Writes text to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace qsdlab
