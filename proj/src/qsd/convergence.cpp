#include "qsdlab/qsd/convergence.hpp"

#include "qsdlab/core/error.hpp"
#include "qsdlab/core/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qsdlab::qsd {

nlohmann::json DecayFit::to_json() const {
    return {{"rate", rate},
            {"C", C},
            {"r2", r_squared},
            {"rate_se", rate_se},
            {"rate_ci", {rate_ci.lo, rate_ci.hi}},
            {"window", {t_lo, t_hi}},
            {"points", points()}};
}

DecayFit fit_decay_rate(std::span<const double> t, std::span<const double> value,
                        std::span<const double> noise_floor) {
    require(t.size() == value.size() && t.size() == noise_floor.size(), "fit_decay_rate: size mismatch");
    if (t.empty()) throw NumericalError("fit_decay_rate: insufficient decay resolved (empty curve)");
    const double vmax = *std::max_element(value.begin(), value.end());
    std::size_t lo = t.size();
    for (std::size_t i = 0; i < t.size(); ++i)
        if (value[i] <= 0.8 * vmax) {
            lo = i;
            break;
        }
    std::size_t hi = 0;
    bool found = false;
    for (std::size_t i = t.size(); i-- > lo;)
        if (value[i] >= 10.0 * noise_floor[i]) {
            hi = i;
            found = true;
            break;
        }
    if (lo == t.size() || !found || hi < lo + 4) {
        throw NumericalError("fit_decay_rate: insufficient decay resolved (window of " +
                             std::to_string(found && lo < t.size() && hi >= lo ? hi - lo + 1 : 0) + " points)");
    }
    std::vector<double> x, y;
    for (std::size_t i = lo; i <= hi; ++i) {
        if (!(value[i] > 0.0))
            throw PreconditionError("fit_decay_rate: curve is not positive at t = " + std::to_string(t[i]));
        x.push_back(t[i]);
        y.push_back(std::log(value[i]));
    }
    const LinearFit f = linear_fit(x, y);
    DecayFit out;
    out.rate = -f.slope;
    out.C = std::exp(f.intercept);
    out.r_squared = f.r_squared;
    out.rate_se = f.slope_se;
    const double q = student_t_quantile(0.975, static_cast<double>(x.size() - 2));
    out.rate_ci = {out.rate - q * f.slope_se, out.rate + q * f.slope_se};
    out.i_lo = lo;
    out.i_hi = hi;
    out.t_lo = t[lo];
    out.t_hi = t[hi];
    return out;
}

DecayFit fit_decay_rate(std::span<const double> t, std::span<const double> value, double noise_floor) {
    const std::vector<double> floor(t.size(), noise_floor);
    return fit_decay_rate(t, value, floor);
}

NoisyTV tv_with_noise(const EmpiricalMeasure<DiscreteState>& a, std::size_t n_a,
                      const EmpiricalMeasure<DiscreteState>& b, std::size_t n_b) {
    require(n_a > 0, "tv_with_noise: first law needs samples");
    const auto ca = a.compacted().normalized();
    const auto cb = b.compacted().normalized();
    const auto& xa = ca.atoms();
    const auto& xb = cb.atoms();
    const double ia = 1.0 / static_cast<double>(n_a);
    const double ib = n_b > 0 ? 1.0 / static_cast<double>(n_b) : 0.0;
    const double wa = static_cast<double>(n_a), wb = static_cast<double>(n_b);
    NoisyTV out;
    double var = 0.0, floor = 0.0;
    auto cell = [&](double p, double q) {
        out.tv += std::abs(p - q);
        var += p * (1.0 - p) * ia + q * (1.0 - q) * ib;
        const double pooled = n_b > 0 ? (wa * p + wb * q) / (wa + wb) : q;
        floor += std::sqrt(pooled * (1.0 - pooled) * (ia + ib));
    };
    std::size_t i = 0, j = 0;
    while (i < xa.size() || j < xb.size()) {
        if (j == xb.size() || (i < xa.size() && xa[i].state < xb[j].state)) {
            cell(xa[i++].weight, 0.0);
        } else if (i == xa.size() || xb[j].state < xa[i].state) {
            cell(0.0, xb[j++].weight);
        } else {
            cell(xa[i++].weight, xb[j++].weight);
        }
    }
    out.tv = std::min(out.tv, 2.0);
    out.floor = std::sqrt(2.0 / std::numbers::pi) * floor;
    const double half = 1.96 * std::sqrt(var);
    out.ci = {std::max(0.0, out.tv - half), std::min(2.0, out.tv + half)};
    return out;
}

namespace {

void fit_survival(ConvergenceReport& rep, const ConditionedLaws<DiscreteState>& laws) {
    std::vector<double> t, s;
    for (std::size_t g = 0; g < laws.resolved; ++g) {
        t.push_back(laws.grid.at(g));
        s.push_back(static_cast<double>(laws.survivors[g]) / static_cast<double>(laws.n_traj));
    }
    try {
        rep.lambda0 = fit_decay_rate(t, s, 1.0 / static_cast<double>(laws.n_traj));
    } catch (const std::exception& e) {
        rep.lambda0_error = e.what();
    }
}

void fit_curve(ConvergenceReport& rep) {
    try {
        rep.fit = fit_decay_rate(rep.t, rep.tv, rep.noise_floor);
    } catch (const std::exception& e) {
        rep.fit_error = e.what();
    }
}

} // namespace

ConvergenceReport convergence_to_measure(const ConditionedLaws<DiscreteState>& laws,
                                         const EmpiricalMeasure<DiscreteState>& reference, std::size_t n_ref,
                                         std::string label, double reference_error) {
    require(reference_error >= 0.0, "convergence_to_measure: reference_error must be >= 0");
    ConvergenceReport rep;
    rep.reference = std::move(label);
    for (std::size_t g = 0; g < laws.resolved && laws.reliable[g]; ++g) {
        const NoisyTV v = tv_with_noise(laws.laws[g], laws.survivors[g], reference, n_ref);
        rep.t.push_back(laws.grid.at(g));
        rep.tv.push_back(v.tv);
        rep.survivors.push_back(laws.survivors[g]);
        rep.ci_lo.push_back(v.ci.lo);
        rep.ci_hi.push_back(v.ci.hi);
        rep.noise_floor.push_back(v.floor + reference_error);
    }
    fit_curve(rep);
    fit_survival(rep, laws);
    return rep;
}

ConvergenceReport convergence_between(const ConditionedLaws<DiscreteState>& laws,
                                      const ConditionedLaws<DiscreteState>& reference, std::string label) {
    require(laws.grid.size() == reference.grid.size() && laws.grid.dt == reference.grid.dt &&
                laws.grid.t0 == reference.grid.t0,
            "convergence_between: time grids differ");
    ConvergenceReport rep;
    rep.reference = std::move(label);
    for (std::size_t g = 0; g < std::min(laws.resolved, reference.resolved); ++g) {
        if (!laws.reliable[g] || !reference.reliable[g]) break;
        const NoisyTV v = tv_with_noise(laws.laws[g], laws.survivors[g], reference.laws[g], reference.survivors[g]);
        rep.t.push_back(laws.grid.at(g));
        rep.tv.push_back(v.tv);
        rep.survivors.push_back(laws.survivors[g]);
        rep.ci_lo.push_back(v.ci.lo);
        rep.ci_hi.push_back(v.ci.hi);
        rep.noise_floor.push_back(v.floor);
    }
    fit_curve(rep);
    fit_survival(rep, laws);
    return rep;
}

ConditionedLaws<DiscreteState> bin_laws(const ConditionedLaws<ContinuousState>& laws, const BinGrid& grid) {
    ConditionedLaws<DiscreteState> out;
    out.grid = laws.grid;
    out.n_traj = laws.n_traj;
    out.survivors = laws.survivors;
    out.reliable = laws.reliable;
    out.resolved = laws.resolved;
    out.guard_tripped = laws.guard_tripped;
    out.laws.resize(laws.laws.size());
    for (std::size_t g = 0; g < laws.laws.size(); ++g)
        if (!laws.laws[g].empty()) out.laws[g] = bin(laws.laws[g], grid).cells;
    return out;
}

void ConvergenceReport::write_csv(std::ostream& os) const {
    os << "t,tv,survivors,ci_lo,ci_hi\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
        os << format_double(t[i]) << ',' << format_double(tv[i]) << ',' << survivors[i] << ','
           << format_double(ci_lo[i]) << ',' << format_double(ci_hi[i]) << '\n';
    }
}

nlohmann::json ConvergenceReport::summary() const {
    nlohmann::json j;
    j["reference"] = reference;
    j["points"] = t.size();
    if (fit) {
        j["rate"] = fit->rate;
        j["C"] = fit->C;
        j["r2"] = fit->r_squared;
        j["rate_ci"] = {fit->rate_ci.lo, fit->rate_ci.hi};
        j["window"] = {fit->t_lo, fit->t_hi};
    } else {
        j["rate"] = nullptr;
        j["fit_error"] = fit_error;
    }
    if (lambda0) {
        j["lambda0"] = lambda0->rate;
        j["lambda0_ci"] = {lambda0->rate_ci.lo, lambda0->rate_ci.hi};
        j["lambda0_window"] = {lambda0->t_lo, lambda0->t_hi};
    } else {
        j["lambda0"] = nullptr;
        j["lambda0_error"] = lambda0_error;
    }
    return j;
}

} // namespace qsdlab::qsd
