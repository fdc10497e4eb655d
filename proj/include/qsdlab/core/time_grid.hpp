#pragma once

#include "qsdlab/core/error.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace qsdlab {

/// Instants t0, t0 + dt, ..., t0 + n_steps * dt.
struct TimeGrid {
    double t0 = 0.0;
    double dt = 1.0;
    std::size_t n_steps = 1;

    void validate() const {
        require(t0 >= 0.0 && std::isfinite(t0), "TimeGrid: t0 must be finite and >= 0");
        require(dt > 0.0 && std::isfinite(dt), "TimeGrid: dt must be > 0");
        require(n_steps > 0, "TimeGrid: n_steps must be positive");
    }

    std::size_t size() const noexcept { return n_steps + 1; }
    double at(std::size_t i) const noexcept { return t0 + static_cast<double>(i) * dt; }
    double last() const noexcept { return at(n_steps); }

    std::vector<double> instants() const {
        std::vector<double> t(size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = at(i);
        return t;
    }
};

} // namespace qsdlab
