#pragma once

#include "qsdlab/core/io.hpp"
#include "qsdlab/core/measure.hpp"
#include "qsdlab/core/stats.hpp"

#include <nlohmann/json.hpp>

#include <ostream>
#include <string_view>

namespace qsdlab::qsd {

enum class Method { eigen_oracle, conditioned_mc, fleming_viot };

constexpr std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::eigen_oracle: return "eigen_oracle";
        case Method::conditioned_mc: return "conditioned_mc";
        case Method::fleming_viot: return "fleming_viot";
    }
    return "unknown";
}

template <class State>
struct QSDEstimate {
    EmpiricalMeasure<State> measure;  // normalized
    Method method = Method::eigen_oracle;
    double lambda0 = 0.0;
    Interval lambda0_ci{};
    nlohmann::json diagnostics = nlohmann::json::object();

    nlohmann::json summary() const {
        return {{"method", std::string(to_string(method))},
                {"lambda0", lambda0},
                {"lambda0_ci", {lambda0_ci.lo, lambda0_ci.hi}},
                {"atoms", measure.size()},
                {"diagnostics", diagnostics}};
    }
};

/// Atom table: coord_0..coord_{d-1}, weight.
template <class State>
void write_measure_csv(const EmpiricalMeasure<State>& m, std::ostream& os) {
    const std::size_t d = m.empty() ? 0 : m.atoms().front().state.dimension();
    for (std::size_t i = 0; i < d; ++i) os << "coord_" << i << ',';
    os << "weight\n";
    for (const auto& a : m.atoms()) {
        for (auto c : a.state.coords) os << format_coord(c) << ',';
        os << format_double(a.weight) << '\n';
    }
}

} // namespace qsdlab::qsd
