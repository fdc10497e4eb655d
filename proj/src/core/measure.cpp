#include "qsdlab/core/measure.hpp"

#include <limits>

namespace qsdlab {

namespace {

void require_normalized(const EmpiricalMeasure<DiscreteState>& m, const char* name) {
    if (m.empty() || !m.is_normalized(1e-12)) {
        throw PreconditionError(std::string("tv_distance: measure ") + name + " is not normalized");
    }
}

double weighted_quantile(std::vector<std::pair<double, double>>& values, double q) {
    std::sort(values.begin(), values.end());
    double total = 0.0;
    for (const auto& v : values) total += v.second;
    const double target = q * total;
    double acc = 0.0;
    for (const auto& v : values) {
        acc += v.second;
        if (acc >= target) return v.first;
    }
    return values.back().first;
}

} // namespace

double tv_distance(const EmpiricalMeasure<DiscreteState>& mu, const EmpiricalMeasure<DiscreteState>& nu) {
    require_normalized(mu, "mu");
    require_normalized(nu, "nu");
    const auto a = mu.compacted();
    const auto b = nu.compacted();
    const auto& xa = a.atoms();
    const auto& xb = b.atoms();
    double sum = 0.0;
    std::size_t i = 0, j = 0;
    while (i < xa.size() || j < xb.size()) {
        if (j == xb.size() || (i < xa.size() && xa[i].state < xb[j].state)) {
            sum += xa[i++].weight;
        } else if (i == xa.size() || xb[j].state < xa[i].state) {
            sum += xb[j++].weight;
        } else {
            sum += std::abs(xa[i++].weight - xb[j++].weight);
        }
    }
    return std::min(sum, 2.0);
}

DiscreteState BinGrid::cell(const ContinuousState& x) const {
    require(x.dimension() == dimension(), "BinGrid::cell: dimension mismatch");
    DiscreteState c;
    c.coords.resize(dimension());
    for (std::size_t i = 0; i < dimension(); ++i) {
        const double width = (hi[i] - lo[i]) / bins[i];
        Count k = width > 0.0 ? static_cast<Count>(std::floor((x[i] - lo[i]) / width)) : 0;
        c[i] = std::clamp<Count>(k, 0, bins[i] - 1);
    }
    return c;
}

BinGrid BinGrid::from_quantiles(const std::vector<const EmpiricalMeasure<ContinuousState>*>& samples,
                                int bins_per_axis, double q_lo, double q_hi) {
    require(!samples.empty(), "BinGrid::from_quantiles: no samples");
    require(bins_per_axis > 0, "BinGrid::from_quantiles: bins_per_axis must be positive");
    require(0.0 <= q_lo && q_lo < q_hi && q_hi <= 1.0, "BinGrid::from_quantiles: bad quantile range");
    std::size_t d = 0;
    for (const auto* m : samples) {
        require(m != nullptr && !m->empty(), "BinGrid::from_quantiles: empty sample");
        d = m->atoms().front().state.dimension();
    }
    BinGrid g;
    g.lo.resize(d);
    g.hi.resize(d);
    g.bins.assign(d, bins_per_axis);
    for (std::size_t axis = 0; axis < d; ++axis) {
        std::vector<std::pair<double, double>> values;
        for (const auto* m : samples) {
            const double mass = m->total_mass();
            for (const auto& a : m->atoms()) {
                require(a.state.dimension() == d, "BinGrid::from_quantiles: dimension mismatch");
                values.emplace_back(a.state[axis], a.weight / mass);
            }
        }
        g.lo[axis] = weighted_quantile(values, q_lo);
        g.hi[axis] = weighted_quantile(values, q_hi);
        if (!(g.hi[axis] > g.lo[axis])) g.hi[axis] = g.lo[axis] + 1.0;
    }
    return g;
}

BinnedMeasure bin(const EmpiricalMeasure<ContinuousState>& m, const BinGrid& grid) {
    require(m.total_mass() > 0.0, "bin: zero measure");
    EmpiricalMeasure<DiscreteState> cells;
    cells.reserve(m.size());
    for (const auto& a : m.atoms()) cells.add(grid.cell(a.state), a.weight);
    return {grid, cells.compacted().normalized()};
}

double tv_distance(const BinnedMeasure& mu, const BinnedMeasure& nu) {
    if (!(mu.grid == nu.grid)) throw PreconditionError("tv_distance: binned measures use different grids");
    return tv_distance(mu.cells, nu.cells);
}

} // namespace qsdlab
