#include "qsdlab/feller/conditions.hpp"

#include "qsdlab/core/error.hpp"
#include "qsdlab/core/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qsdlab::feller {

FellerPair::FellerPair(const FellerModel& model, HBetaFunction h, GFunction g)
    : model_(model), rescaled_(model.rescaled()), h_(std::move(h)), g_(std::move(g)) {}

double FellerPair::V(const ContinuousState& x) const {
    const ContinuousState y = model_.to_rescaled(x);
    double v = 1.0;
    for (double c : y.coords) v *= g_.value(c);
    return v;
}

double FellerPair::phi(const ContinuousState& x) const {
    const ContinuousState y = model_.to_rescaled(x);
    double v = 1.0;
    for (double c : y.coords) v *= h_.value(c);
    return v;
}

namespace {

template <class F>
double log_generator_ratio(const FellerModel& rm, const F& f, std::span<const double> y) {
    const std::size_t d = y.size();
    std::vector<double> r(d);
    rm.growth(y, r);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const Jet j = f(y[i]);
        s += (y[i] * j.d1 * r[i] + y[i] * j.d2) / j.v;
    }
    return s;
}

void require_interior(const ContinuousState& x, const char* what) {
    for (double c : x.coords)
        if (!(c > 0.0)) throw PreconditionError(std::string(what) + ": state " + to_string(x) + " is not interior");
}

} // namespace

double FellerPair::LV_over_V_rescaled(std::span<const double> y) const {
    return log_generator_ratio(rescaled_, g_, y);
}

double FellerPair::Lphi_over_phi_rescaled(std::span<const double> y) const {
    return log_generator_ratio(rescaled_, h_, y);
}

double FellerPair::LV(const ContinuousState& x) const {
    require_interior(x, "FellerPair::LV");
    return V(x) * LV_over_V_rescaled(model_.to_rescaled(x).coords);
}

double FellerPair::Lphi(const ContinuousState& x) const {
    require_interior(x, "FellerPair::Lphi");
    return phi(x) * Lphi_over_phi_rescaled(model_.to_rescaled(x).coords);
}

nlohmann::json FellerPair::to_json() const {
    return {{"model", model_.to_json()}, {"h_beta", h_.to_json()}, {"g", g_.to_json()}};
}

nlohmann::json FellerSetup::to_json() const {
    return {{"assumption", params.to_json()}, {"M", m.to_json()},      {"beta", beta},
            {"gamma", gamma_exp},             {"epsilon", epsilon},    {"pair", pair.to_json()}};
}

double default_feller_epsilon(double eta, double beta, std::size_t d) {
    return eta / (4.0 * beta * static_cast<double>(d));
}

FellerSetup auto_feller_setup(const FellerModel& model, double eta) {
    const FellerAssumptionParams params = auto_assumption_params(model, eta);
    const MConstants m = compute_M(params);
    const double beta = select_feller_beta(params, m);
    const double gexp = default_g_exponent(eta);
    return {params,
            m,
            beta,
            gexp,
            default_feller_epsilon(eta, beta, model.dimension()),
            FellerPair(model, build_h_beta(params, beta, m), build_g(params, gexp))};
}

namespace {

void unflatten_idx(std::size_t flat, std::size_t p, std::vector<std::size_t>& idx) {
    for (std::size_t k = idx.size(); k-- > 0;) {
        idx[k] = flat % p;
        flat /= p;
    }
}

std::uint64_t exhaustion_index(std::span<const double> y) {
    double hi = 0.0, lo = 1e300;
    for (double c : y) {
        hi = std::max(hi, c);
        lo = std::min(lo, c);
    }
    return static_cast<std::uint64_t>(std::floor(std::max(hi / 2.0, 1.0 / (2.0 * lo)))) + 1;
}

void add_box(lyap::CheckCertificate& cert, const FellerModel& model, std::uint64_t n) {
    cert.witnesses["n_star"] = static_cast<double>(n);
    if (n == 0) return;
    for (std::size_t i = 0; i < model.dimension(); ++i) {
        const double s = model.gamma()[i] / 2.0;
        cert.witnesses["box_lo_" + std::to_string(i)] = s / (2.0 * static_cast<double>(n));
        cert.witnesses["box_hi_" + std::to_string(i)] = s * 2.0 * static_cast<double>(n);
    }
}

} // namespace

FellerConditionReport check_feller_condition_report(const FellerPair& pair, const FellerAssumptionParams& params,
                                                    double epsilon, const LogGrid& grid, double eps_abs,
                                                    ExecPolicy policy) {
    params.validate();
    grid.validate();
    const std::size_t d = pair.model().dimension();
    const double beta = pair.h().beta();
    require(epsilon > 0.0, "check_feller_conditions: epsilon must be positive");
    if (!(beta * static_cast<double>(d) * epsilon < params.eta / 2.0)) {
        throw PreconditionError("check_feller_conditions: epsilon = " + std::to_string(epsilon) +
                                " violates beta d epsilon < eta / 2 (beta = " + std::to_string(beta) +
                                ", d = " + std::to_string(d) + ", eta = " + std::to_string(params.eta) + ")");
    }
    if (grid.lo < eps_abs) {
        throw PreconditionError("check_feller_conditions: grid lower end " + std::to_string(grid.lo) +
                                " is closer to the boundary than the absorption floor " + std::to_string(eps_abs));
    }
    const std::vector<double> axis = grid.axis();
    const std::size_t P = axis.size();
    std::size_t n = 1;
    for (std::size_t k = 0; k < d; ++k) n *= P;

    struct Point {
        double S, T, log_ratio;  // L phi/phi; LV/V + (V/phi)^eps; log(V/phi)
    };
    std::vector<Point> pts(n);
    parallel_for_static(policy, static_cast<std::int64_t>(n), [&](std::int64_t f) {
        std::vector<std::size_t> idx(d);
        std::vector<double> y(d);
        unflatten_idx(static_cast<std::size_t>(f), P, idx);
        double lr = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            y[k] = axis[idx[k]];
            lr += std::log(pair.g().value(y[k])) - std::log(pair.h().value(y[k]));
        }
        const double S = pair.Lphi_over_phi_rescaled(y);
        const double T = pair.LV_over_V_rescaled(y) + std::exp(epsilon * lr);
        pts[f] = {S, T, lr};
    });

    FellerConditionReport rep;
    auto& ca = rep.condition_a;
    auto& cb = rep.condition_b;
    const std::string domain = "rescaled log grid [" + std::to_string(grid.lo) + ", " + std::to_string(grid.hi) +
                               "]^" + std::to_string(d) + ", " + std::to_string(P) + " points per axis";
    ca.check = "feller_condition_a";
    cb.check = "feller_condition_b";
    for (auto* c : {&ca, &cb}) {
        c->qualifier = "grid";
        c->domain = domain;
    }

    std::uint64_t na = 0, nb = 0, fails_a = 0, fails_b = 0, outer_a = 0, outer_b = 0;
    double C = 0.0, C2 = 0.0, Bp = -1e300, minS = 1e300, maxT = -1e300;
    std::vector<std::size_t> idx(d);
    std::vector<double> y(d);
    for (std::size_t f = 0; f < n; ++f) {
        unflatten_idx(f, P, idx);
        bool outer = false;
        double bsum = 0.0, phi = 1.0;
        for (std::size_t k = 0; k < d; ++k) {
            y[k] = axis[idx[k]];
            outer = outer || idx[k] == 0 || idx[k] == P - 1;
            bsum += std::pow(y[k], params.eta) + 2.0 / y[k];
            phi *= pair.h().value(y[k]);
        }
        const Point& p = pts[f];
        minS = std::min(minS, p.S);
        maxT = std::max(maxT, p.T);
        Bp = std::max(Bp, bsum - p.S);
        const auto to_orig = [&] { return pair.model().from_rescaled(ContinuousState(y)).coords; };
        if (p.S < 0.0) {
            ++fails_a;
            na = std::max(na, exhaustion_index(y));
            C = std::max(C, -p.S * phi);
            if (outer) {
                ++outer_a;
                if (ca.counterexamples.size() < 20)
                    ca.counterexamples.push_back({"-L phi > 0 on the outer layer of the grid", to_orig(),
                                                  {{"Lphi_over_phi", p.S}, {"phi", phi}}});
            }
        }
        if (p.T > 0.0) {
            ++fails_b;
            nb = std::max(nb, exhaustion_index(y));
            C2 = std::max(C2, std::exp(p.log_ratio) * p.T);
            if (outer) {
                ++outer_b;
                if (cb.counterexamples.size() < 20)
                    cb.counterexamples.push_back({"LV + V^(1+eps)/phi^eps > 0 on the outer layer of the grid",
                                                  to_orig(), {{"normalized_excess", p.T}, {"phi", phi}}});
            }
        }
    }
    ca.verdict = outer_a == 0 ? lyap::Verdict::holds : lyap::Verdict::violated;
    cb.verdict = outer_b == 0 ? lyap::Verdict::holds : lyap::Verdict::violated;
    ca.witnesses = {{"C", C}, {"failures", static_cast<double>(fails_a)}, {"min_Lphi_over_phi", minS},
                    {"B_prime", Bp}, {"beta", pair.h().beta()}};
    add_box(ca, pair.model(), na);
    cb.witnesses = {{"C_prime", 1.0}, {"C_second", C2}, {"epsilon", epsilon},
                    {"failures", static_cast<double>(fails_b)}, {"max_normalized_excess", maxT}};
    add_box(cb, pair.model(), nb);
    cb.notes.push_back("normalized excess = LV/V + (V/phi)^eps; C'' = max phi^-1 (LV + V^(1+eps)/phi^eps)^+");

    auto& cc = rep.combined;
    cc.check = "feller_conditions";
    cc.qualifier = "grid";
    cc.domain = domain;
    cc.verdict = ca.holds() && cb.holds() ? lyap::Verdict::holds : lyap::Verdict::violated;
    cc.witnesses = {{"C", C},      {"C_prime", 1.0},  {"C_second", C2},
                    {"B_prime", Bp}, {"epsilon", epsilon}, {"beta", pair.h().beta()}};
    add_box(cc, pair.model(), std::max(na, nb));
    cc.counterexamples = ca.counterexamples;
    cc.counterexamples.insert(cc.counterexamples.end(), cb.counterexamples.begin(), cb.counterexamples.end());
    return rep;
}

lyap::CheckCertificate check_feller_conditions(const FellerPair& pair, const FellerAssumptionParams& params,
                                               double epsilon, const LogGrid& grid, double eps_abs,
                                               ExecPolicy policy) {
    return check_feller_condition_report(pair, params, epsilon, grid, eps_abs, policy).combined;
}

SurvivalBoundReport survival_bound_check(const FellerPair& pair, double r0, const std::vector<ContinuousState>& states,
                                         std::uint64_t mc_budget, const FellerScheme& scheme, const RngStream& rng,
                                         double ci_width_target, ExecPolicy policy) {
    require(r0 > 0.0, "survival_bound_check: r0 must be positive");
    require(mc_budget > 0, "survival_bound_check: mc_budget must be positive");
    require(!states.empty(), "survival_bound_check: empty state grid");
    scheme.validate();
    const FellerSimulator sim(pair.model(), scheme);
    const std::size_t ns = states.size();
    std::vector<bool> absorbed_start(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        require(states[s].dimension() == pair.model().dimension(), "survival_bound_check: dimension mismatch");
        absorbed_start[s] = std::any_of(states[s].coords.begin(), states[s].coords.end(),
                                        [&](double c) { return c <= scheme.eps_abs; });
    }
    std::vector<unsigned char> alive(ns * mc_budget, 0);
    parallel_for(policy, static_cast<std::int64_t>(ns * mc_budget), [&](std::int64_t f) {
        const std::size_t s = static_cast<std::size_t>(f) / mc_budget;
        const std::uint64_t j = static_cast<std::uint64_t>(f) % mc_budget;
        if (absorbed_start[s]) return;
        ContinuousState x = states[s];
        RngStream stream = rng.child(j);
        sim.advance(x, r0, stream);
        alive[f] = !x.absorbed();
    });

    SurvivalBoundReport rep;
    auto& cert = rep.certificate;
    cert.check = "feller_survival_bound";
    cert.qualifier = "empirical";
    cert.domain = std::to_string(ns) + " near-boundary states, " + std::to_string(mc_budget) + " paths each";
    double p0 = 0.0, widest = 0.0;
    bool violated = false;
    for (std::size_t s = 0; s < ns; ++s) {
        SurvivalEstimate e;
        e.state = states[s];
        e.V = absorbed_start[s] ? 0.0 : pair.V(states[s]);
        e.trials = mc_budget;
        for (std::uint64_t j = 0; j < mc_budget; ++j) e.survivors += alive[s * mc_budget + j];
        e.ci = absorbed_start[s] ? Interval{0.0, 0.0} : wilson_interval(e.survivors, mc_budget);
        if (!absorbed_start[s]) {
            widest = std::max(widest, e.ci.hi - e.ci.lo);
            if (e.V > 0.0) {
                p0 = std::max(p0, e.ci.hi / e.V);
            } else if (e.survivors > 0) {
                violated = true;
                cert.counterexamples.push_back({"survival observed where V vanishes", e.state.coords,
                                                {{"survivors", static_cast<double>(e.survivors)}}});
            }
        }
        rep.estimates.push_back(e);
    }
    cert.witnesses = {{"p0", p0}, {"r0", r0}, {"widest_ci", widest}, {"mc_budget", static_cast<double>(mc_budget)}};
    if (violated) {
        cert.verdict = lyap::Verdict::violated;
    } else if (widest > ci_width_target) {
        cert.verdict = lyap::Verdict::inconclusive;
        cert.notes.push_back("confidence interval wider than target " + std::to_string(ci_width_target) +
                             "; increase mc_budget");
    } else {
        cert.verdict = lyap::Verdict::holds;
    }
    return rep;
}

} // namespace qsdlab::feller
