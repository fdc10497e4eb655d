#include "qsdlab/lyapunov/pair.hpp"

#include <cmath>
#include <memory>

namespace qsdlab::lyap {

LyapunovPair<DiscreteState> make_bd_pair(const bd::BDModel& model, const bd::BDLyapunovParams& params, Count k_max) {
    params.validate();
    auto table = std::make_shared<const bd::SeriesTable>(params, k_max);
    auto m = std::make_shared<const bd::BDModel>(model);
    LyapunovPair<DiscreteState> p;
    p.V = [table](const DiscreteState& n) { return n.absorbed() ? 0.0 : table->V(total(n)); };
    p.phi = [table](const DiscreteState& n) { return n.absorbed() ? 0.0 : table->phi(total(n)); };
    p.LV = [table, m](const DiscreteState& n) { return bd::SeriesGenerator(*m, *table)(n).LV; };
    p.Lphi = [table, m](const DiscreteState& n) { return bd::SeriesGenerator(*m, *table)(n).Lphi; };
    p.name = "bd_series";
    p.metadata = {{"model", model.name()}, {"params", params.to_json()}};
    return p;
}

LyapunovPair<ContinuousState> make_feller_pair(const feller::FellerPair& pair) {
    auto fp = std::make_shared<const feller::FellerPair>(pair);
    LyapunovPair<ContinuousState> p;
    p.V = [fp](const ContinuousState& x) { return fp->V(x); };
    p.phi = [fp](const ContinuousState& x) { return fp->phi(x); };
    p.LV = [fp](const ContinuousState& x) { return fp->LV(x); };
    p.Lphi = [fp](const ContinuousState& x) { return fp->Lphi(x); };
    p.name = "feller_product";
    p.metadata = pair.to_json();
    return p;
}

std::uint64_t feller_exhaustion_index(const feller::FellerModel& model, const ContinuousState& x) {
    const ContinuousState y = model.to_rescaled(x);
    double hi = 0.0, lo = 1e300;
    for (double c : y.coords) {
        hi = std::max(hi, c);
        lo = std::min(lo, c);
    }
    return static_cast<std::uint64_t>(std::floor(std::max(hi / 2.0, 1.0 / (2.0 * lo)))) + 1;
}

} // namespace qsdlab::lyap
