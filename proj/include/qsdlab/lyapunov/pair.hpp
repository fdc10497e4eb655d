#pragma once

#include "qsdlab/bd/model.hpp"
#include "qsdlab/bd/series.hpp"
#include "qsdlab/core/state.hpp"
#include "qsdlab/feller/conditions.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>

namespace qsdlab::lyap {

/// (V, phi) with their generator images, supplied by the model module that
/// built them. LV and Lphi are only called at non-absorbed states.
template <class State>
struct LyapunovPair {
    using Fn = std::function<double(const State&)>;

    Fn V;
    Fn phi;
    Fn LV;
    Fn Lphi;
    std::string name;
    nlohmann::json metadata;
};

/// The series pair of a birth-death model (V, phi functions of |n|).
LyapunovPair<DiscreteState> make_bd_pair(const bd::BDModel& model, const bd::BDLyapunovParams& params,
                                         Count k_max = 1000);

LyapunovPair<ContinuousState> make_feller_pair(const feller::FellerPair& pair);

/// Smallest n with x in O_n: |n| for birth-death states, and for diffusions
/// floor(max(max_i y_i / 2, 1 / (2 min_i y_i))) + 1 in rescaled coordinates y.
inline std::uint64_t bd_exhaustion_index(const DiscreteState& n) { return static_cast<std::uint64_t>(total(n)); }
std::uint64_t feller_exhaustion_index(const feller::FellerModel& model, const ContinuousState& x);

} // namespace qsdlab::lyap
