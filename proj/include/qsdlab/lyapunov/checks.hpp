#pragma once

#include "qsdlab/core/batch.hpp"
#include "qsdlab/core/error.hpp"
#include "qsdlab/core/measure.hpp"
#include "qsdlab/core/parallel.hpp"
#include "qsdlab/core/rng.hpp"
#include "qsdlab/core/stats.hpp"
#include "qsdlab/lyapunov/certificate.hpp"
#include "qsdlab/lyapunov/pair.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace qsdlab::lyap {

/// Log-uniform grid of `points` values on [lo, hi].
std::vector<double> log_grid(double lo, double hi, std::size_t points);

// ---------------------------------------------------------------------------
// Admissibility

/// `escape` must be ordered so that it leaves every O_n (|n| -> inf for chains;
/// max coordinate -> inf or min coordinate -> 0 for diffusions).
/// `escape_index` measures how far out a state is.
template <class State>
CheckCertificate check_admissible(const LyapunovPair<State>& pair, const std::vector<State>& escape,
                                  const std::function<double(const State&)>& escape_index) {
    require(escape.size() >= 4, "check_admissible: need at least 4 escaping states");
    const double first = escape_index(escape.front()), last = escape_index(escape.back());
    if (!(last >= 10.0 * first)) {
        throw PreconditionError("check_admissible: sample does not escape (index grows from " + std::to_string(first) +
                                " to " + std::to_string(last) + ", need a factor 10)");
    }
    CheckCertificate cert;
    cert.check = "admissible_couple";
    cert.qualifier = "grid";
    cert.domain = std::to_string(escape.size()) + " states along an escaping sequence";
    double min_ratio = 1e300, max_V = 0.0, max_phi = 0.0, sup_LV = -1e300, inf_Lphi = 1e300;
    std::vector<double> idx, log_ratio;
    for (const State& x : escape) {
        const double v = pair.V(x), p = pair.phi(x);
        if (!(v > 0.0) || !(p > 0.0) || !std::isfinite(v) || !std::isfinite(p)) {
            cert.counterexamples.push_back({"V or phi not positive and finite off the boundary", as_doubles(x),
                                            {{"V", v}, {"phi", p}}});
            continue;
        }
        min_ratio = std::min(min_ratio, v / p);
        max_V = std::max(max_V, v);
        max_phi = std::max(max_phi, p);
        sup_LV = std::max(sup_LV, pair.LV(x));
        inf_Lphi = std::min(inf_Lphi, pair.Lphi(x));
        idx.push_back(std::log(escape_index(x)));
        log_ratio.push_back(std::log(v / p));
    }
    // V/phi -> inf out of (O_n): the ratio must grow along the escape.
    bool grows = false;
    double slope = 0.0;
    if (idx.size() >= 3) {
        const LinearFit f = linear_fit(idx, log_ratio);
        slope = f.slope;
        const std::size_t tail = idx.size() - idx.size() / 4;
        bool monotone_tail = true;
        for (std::size_t i = std::max<std::size_t>(tail, 1); i < log_ratio.size(); ++i)
            monotone_tail = monotone_tail && log_ratio[i] > log_ratio[i - 1];
        grows = f.slope > 0.0 && monotone_tail && log_ratio.back() > log_ratio.front() + std::log(2.0);
    }
    if (!grows) {
        cert.counterexamples.push_back({"V/phi does not tend to infinity along the escaping sample",
                                        as_doubles(escape.back()),
                                        {{"log_ratio_first", log_ratio.empty() ? 0.0 : log_ratio.front()},
                                         {"log_ratio_last", log_ratio.empty() ? 0.0 : log_ratio.back()},
                                         {"trend_slope", slope}}});
    }
    cert.verdict = cert.counterexamples.empty() ? Verdict::holds : Verdict::violated;
    cert.witnesses = {{"inf_V_over_phi", min_ratio}, {"max_V", max_V},     {"max_phi", max_phi},
                      {"sup_LV", sup_LV},            {"inf_Lphi", inf_Lphi}, {"log_ratio_trend", slope}};
    return cert;
}

/// V(X_{T_n}) -> V(X_tau) = 0 along simulated paths: V vanishes on every
/// absorbed record and the last alive records before absorption carry small V.
template <class State>
CheckCertificate check_absorption_continuity(const LyapunovPair<State>& pair, const TrajectoryBatch<State>& batch) {
    CheckCertificate cert;
    cert.check = "V_continuity_at_absorption";
    cert.qualifier = "empirical";
    cert.domain = std::to_string(batch.trajectories.size()) + " simulated paths";
    std::size_t absorbed = 0;
    double max_at_boundary = 0.0, mean_last_alive = 0.0, mean_start = 0.0;
    for (const auto& tr : batch.trajectories) {
        if (tr.status != TrajectoryStatus::absorbed || tr.states.empty()) continue;
        ++absorbed;
        mean_start += pair.V(tr.states.front());
        const State* last_alive = &tr.states.front();
        for (const auto& s : tr.states) {
            if (s.absorbed()) {
                max_at_boundary = std::max(max_at_boundary, std::abs(pair.V(s)));
            } else {
                last_alive = &s;
            }
        }
        mean_last_alive += pair.V(*last_alive);
    }
    if (absorbed == 0) {
        cert.verdict = Verdict::inconclusive;
        cert.notes.push_back("no absorbed path in the batch");
        cert.witnesses = {{"absorbed_paths", 0.0}};
        return cert;
    }
    mean_last_alive /= static_cast<double>(absorbed);
    mean_start /= static_cast<double>(absorbed);
    cert.witnesses = {{"absorbed_paths", static_cast<double>(absorbed)},
                      {"max_V_on_absorbed_records", max_at_boundary},
                      {"mean_V_last_alive_record", mean_last_alive},
                      {"mean_V_start", mean_start}};
    if (max_at_boundary > 0.0) {
        cert.verdict = Verdict::violated;
        cert.counterexamples.push_back({"V nonzero on an absorbed state", {}, {{"V", max_at_boundary}}});
    } else {
        cert.verdict = mean_last_alive < mean_start ? Verdict::holds : Verdict::inconclusive;
    }
    return cert;
}

// ---------------------------------------------------------------------------
// Random probability measures

/// Dirichlet(1)-weighted mixtures on uniformly drawn supports; support sizes
/// cycle through `sizes`. Draw i uses rng.child(i).
template <class State>
std::vector<EmpiricalMeasure<State>> sample_mixture_measures(const std::vector<State>& pool, std::size_t n_draws,
                                                             const RngStream& rng,
                                                             const std::vector<std::size_t>& sizes = {1, 2, 5, 20}) {
    require(!pool.empty(), "sample_mixture_measures: empty support pool");
    require(!sizes.empty(), "sample_mixture_measures: no support sizes");
    std::vector<EmpiricalMeasure<State>> out(n_draws);
    for (std::size_t i = 0; i < n_draws; ++i) {
        RngStream s = rng.child(i);
        const std::size_t k = sizes[i % sizes.size()];
        EmpiricalMeasure<State> m;
        for (std::size_t j = 0; j < k; ++j) {
            const State& x = pool[s.below(pool.size())];
            m.add(x, -std::log1p(-s.uniform()) + 1e-300);
        }
        out[i] = m.normalized();
    }
    return out;
}

struct MeasureEvaluation {
    double lhs = 0.0;       // mu(LV) - mu(V) mu(Lphi) / mu(phi)
    double mu_phi = 0.0;
    double feature = 0.0;   // mu(V)^(1+eps) / mu(phi)^eps
    double holder_rhs = 0.0;  // mu(V^(1+eps)/phi^eps) mu(phi)^eps, compared with mu(V)^(1+eps)
    double holder_lhs = 0.0;
};

struct NonlinearFit {
    double A = 0.0;
    double B = 0.0;
};

struct NonlinearReport {
    CheckCertificate certificate;
    std::vector<MeasureEvaluation> rows;
    std::vector<NonlinearFit> pareto;
    NonlinearFit fitted;
};

/// mu(LV) - mu(V) mu(Lphi)/mu(phi) <= A mu(phi) - B mu(V)^(1+eps)/mu(phi)^eps over the
/// sampled measures. For each B on a log grid [1e-3, 1e3] the smallest grid A is
/// found, and for each grid A the largest grid B; the non-dominated pairs form
/// the Pareto set. The reported fit is the Pareto pair with the largest B/A,
/// and violations are recounted with it.
NonlinearReport fit_nonlinear_inequality(std::vector<MeasureEvaluation> rows, double epsilon, std::size_t skipped);

template <class State>
NonlinearReport check_nonlinear_inequality(const LyapunovPair<State>& pair,
                                           const std::vector<EmpiricalMeasure<State>>& measures, double epsilon,
                                           ExecPolicy policy = ExecPolicy::parallel) {
    require(epsilon > 0.0, "check_nonlinear_inequality: epsilon must be positive");
    for (const auto& mu : measures)
        for (const auto& a : mu.atoms())
            if (a.state.absorbed())
                throw PreconditionError("check_nonlinear_inequality: measure charges the boundary state " +
                                        to_string(a.state));
    std::vector<MeasureEvaluation> rows(measures.size());
    std::vector<unsigned char> keep(measures.size(), 1);
    parallel_for(policy, static_cast<std::int64_t>(measures.size()), [&](std::int64_t i) {
        const auto& mu = measures[static_cast<std::size_t>(i)];
        double mV = 0, mP = 0, mLV = 0, mLP = 0, mH = 0;
        for (const auto& a : mu.atoms()) {
            const double v = pair.V(a.state), p = pair.phi(a.state);
            mV += a.weight * v;
            mP += a.weight * p;
            mLV += a.weight * pair.LV(a.state);
            mLP += a.weight * pair.Lphi(a.state);
            mH += a.weight * v * std::pow(v / p, epsilon);
        }
        if (!(mP > 0.0) || !std::isfinite(mP)) {
            keep[i] = 0;
            return;
        }
        MeasureEvaluation& r = rows[static_cast<std::size_t>(i)];
        r.lhs = mLV - mV * mLP / mP;
        r.mu_phi = mP;
        r.feature = mV * std::pow(mV / mP, epsilon);
        r.holder_lhs = std::pow(mV, 1.0 + epsilon);
        r.holder_rhs = mH * std::pow(mP, epsilon);
    });
    std::vector<MeasureEvaluation> kept;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (keep[i]) kept.push_back(rows[i]);
    return fit_nonlinear_inequality(std::move(kept), epsilon, rows.size() - kept.size());
}

// ---------------------------------------------------------------------------
// Conditions (a) and (b)

/// A finite set of states and the exhaustion index n(x) = min{n : x in O_n}.
/// States of maximal index form the outer layer: a failure there means the
/// inequality is not seen to hold outside any O_n inside the domain.
template <class State>
struct ConditionDomain {
    std::vector<State> states;
    std::function<std::uint64_t(const State&)> exhaustion_index;
    std::string description;
};

/// -L phi <= C 1_{O_n}: smallest n with -L phi <= 0 outside O_n and C = max (-L phi)^+.
template <class State>
CheckCertificate check_condition_a(const LyapunovPair<State>& pair, const ConditionDomain<State>& dom,
                                   ExecPolicy policy = ExecPolicy::parallel) {
    require(!dom.states.empty(), "check_condition_a: empty domain");
    const std::size_t n = dom.states.size();
    std::vector<double> lp(n);
    std::vector<std::uint64_t> ix(n);
    parallel_for_static(policy, static_cast<std::int64_t>(n), [&](std::int64_t i) {
        lp[i] = pair.Lphi(dom.states[i]);
        ix[i] = dom.exhaustion_index(dom.states[i]);
    });
    const std::uint64_t outer = *std::max_element(ix.begin(), ix.end());
    CheckCertificate cert;
    cert.check = "condition_a";
    cert.qualifier = "grid";
    cert.domain = dom.description;
    double C = 0.0;
    std::uint64_t n_star = 0, fails = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (lp[i] < 0.0) {
            ++fails;
            C = std::max(C, -lp[i]);
            n_star = std::max(n_star, ix[i]);
            if (ix[i] == outer && cert.counterexamples.size() < 20)
                cert.counterexamples.push_back({"-L phi > 0 on the outer layer", as_doubles(dom.states[i]),
                                                {{"Lphi", lp[i]}, {"index", static_cast<double>(ix[i])}}});
        }
    }
    cert.verdict = cert.counterexamples.empty() ? Verdict::holds : Verdict::violated;
    cert.witnesses = {{"C", C}, {"n", static_cast<double>(n_star)}, {"failures", static_cast<double>(fails)},
                      {"outer_index", static_cast<double>(outer)}};
    return cert;
}

/// LV + C' V^(1+eps)/phi^eps <= C'' phi. For C' on a log grid [1e-3, 1e3] the
/// inequality with C'' = 0 must hold outside some O_n inside the domain; the
/// largest such C' is reported with n and C'' = max over the domain of
/// (LV + C' V^(1+eps)/phi^eps)^+ / phi.
template <class State>
CheckCertificate check_condition_b(const LyapunovPair<State>& pair, double epsilon, const ConditionDomain<State>& dom,
                                   ExecPolicy policy = ExecPolicy::parallel) {
    require(epsilon > 0.0, "check_condition_b: epsilon must be positive");
    require(!dom.states.empty(), "check_condition_b: empty domain");
    const std::size_t n = dom.states.size();
    std::vector<double> lv(n), feat(n), ph(n);
    std::vector<std::uint64_t> ix(n);
    parallel_for_static(policy, static_cast<std::int64_t>(n), [&](std::int64_t i) {
        const State& x = dom.states[i];
        const double v = pair.V(x), p = pair.phi(x);
        lv[i] = pair.LV(x);
        feat[i] = v * std::pow(v / p, epsilon);
        ph[i] = p;
        ix[i] = dom.exhaustion_index(x);
    });
    const std::uint64_t outer = *std::max_element(ix.begin(), ix.end());
    CheckCertificate cert;
    cert.check = "condition_b";
    cert.qualifier = "grid";
    cert.domain = dom.description;
    const std::vector<double> grid = log_grid(1e-3, 1e3, 25);
    double best = 0.0, best_C2 = 0.0;
    std::uint64_t best_n = 0, best_fails = 0;
    std::size_t worst_outer = 0;
    for (double cp : grid) {
        double C2 = 0.0;
        std::uint64_t m = 0, fails = 0;
        std::size_t outer_fail = n;
        for (std::size_t i = 0; i < n; ++i) {
            const double val = lv[i] + cp * feat[i];
            if (val > 0.0) {
                ++fails;
                C2 = std::max(C2, val / ph[i]);
                m = std::max(m, ix[i]);
                if (ix[i] == outer && outer_fail == n) outer_fail = i;
            }
        }
        if (outer_fail == n) {
            best = cp;
            best_C2 = C2;
            best_n = m;
            best_fails = fails;
        } else if (best == 0.0) {
            worst_outer = outer_fail;
        }
    }
    if (best > 0.0) {
        cert.verdict = Verdict::holds;
    } else {
        cert.verdict = Verdict::violated;
        cert.counterexamples.push_back({"LV + C' V^(1+eps)/phi^eps > 0 on the outer layer for every C' >= 1e-3",
                                        as_doubles(dom.states[worst_outer]),
                                        {{"LV", lv[worst_outer]}, {"feature", feat[worst_outer]}}});
    }
    cert.witnesses = {{"C_prime", best},
                      {"C_second", best_C2},
                      {"epsilon", epsilon},
                      {"n", static_cast<double>(best_n)},
                      {"failures", static_cast<double>(best_fails)},
                      {"outer_index", static_cast<double>(outer)}};
    return cert;
}

} // namespace qsdlab::lyap
