#pragma once

#include "qsdlab/bd/model.hpp"
#include "qsdlab/bd/truncation.hpp"
#include "qsdlab/core/batch.hpp"
#include "qsdlab/core/error.hpp"
#include "qsdlab/core/measure.hpp"
#include "qsdlab/core/stats.hpp"
#include "qsdlab/core/time_grid.hpp"
#include "qsdlab/lyapunov/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace qsdlab::lyap {

/// Survivor counts below this are treated as unresolved by Monte Carlo.
inline constexpr std::size_t kMinResolvedCount = 50;

/// Flatness of a curve over the last half of its abscissae: fitted relative
/// drift |slope| * span / mean, whether the slope's 95% interval covers 0,
/// and, when confidence bands are given, whether one constant lies inside
/// every band. Any of the three makes the curve flat.
struct PlateauTest {
    double slope = 0.0;
    double relative_drift = 0.0;
    bool slope_covers_zero = false;
    bool band_covers_constant = false;
    bool flat = false;
};

PlateauTest plateau_test(std::span<const double> t, std::span<const double> v, double max_drift = 0.1,
                         std::span<const double> lo = {}, std::span<const double> hi = {});

// ---------------------------------------------------------------------------
// Doeblin minorization

/// a1 = sum_y min_x k_x(y) for each instant of the window, where k_x is the
/// law of X_s started at x (restricted to survival, or conditioned on it).
struct DoeblinCurve {
    std::vector<double> s;
    std::vector<double> a1;
};

DoeblinCurve doeblin_exact(const bd::Truncation& tr, const std::vector<DiscreteState>& small_set,
                           const TimeGrid& s_window, bool conditioned = false);

/// Monte Carlo version: `n_samples` paths per start, start i on rng.child(i).
/// States are mapped through `cell` before counting (identity for chains, a
/// histogram cell for diffusions). The certificate holds when some instant
/// has sum_y min_x (Wilson lower bound of k_x(y)) > 0; witnesses report the
/// point estimate a1 and that lower bound at the best instant.
template <TrajectorySimulator Sim, class CellFn>
CheckCertificate doeblin_probe(const Sim& sim, const std::vector<typename Sim::State>& small_set,
                               const TimeGrid& s_window, std::size_t n_samples, const RngStream& rng, CellFn cell,
                               bool conditioned = false, ExecPolicy policy = ExecPolicy::parallel) {
    using State = typename Sim::State;
    require(!small_set.empty(), "doeblin_probe: empty small set");
    require(n_samples > 0, "doeblin_probe: need samples");
    s_window.validate();
    const std::size_t ns = s_window.size();
    using Cell = std::invoke_result_t<CellFn, const State&>;
    // counts[i][g][cell], alive[i][g]
    std::vector<std::vector<std::map<Cell, std::size_t>>> counts(small_set.size(),
                                                                 std::vector<std::map<Cell, std::size_t>>(ns));
    std::vector<std::vector<std::size_t>> alive(small_set.size(), std::vector<std::size_t>(ns, 0));
    SimBatchConfig cfg;
    cfg.n_trajectories = n_samples;
    cfg.horizon = s_window.last();
    cfg.record_grid = s_window;
    for (std::size_t i = 0; i < small_set.size(); ++i) {
        for_each_trajectory(
            sim, EmpiricalMeasure<State>::dirac(small_set[i]), cfg, rng.child(i),
            [&](std::uint64_t, const Trajectory<State>& path) {
                for (std::size_t g = 0; g < ns; ++g) {
                    if (!path.alive_at(g)) continue;
                    ++alive[i][g];
                    ++counts[i][g][cell(path.states[g])];
                }
            },
            policy);
    }

    CheckCertificate cert;
    cert.check = conditioned ? "doeblin_minorization_conditioned" : "doeblin_minorization";
    cert.qualifier = "empirical";
    cert.seed = rng.seed();
    cert.domain = std::to_string(small_set.size()) + " start states, " + std::to_string(ns) + " instants, " +
                  std::to_string(n_samples) + " paths each";
    double best_lower = 0.0, best_a1 = 0.0, best_s = s_window.at(0);
    std::size_t best_support = 0;
    for (std::size_t g = 0; g < ns; ++g) {
        bool resolved = true;
        for (std::size_t i = 0; i < small_set.size(); ++i) resolved = resolved && alive[i][g] > 0;
        if (!resolved) continue;
        double a1 = 0.0, lower = 0.0;
        std::size_t support = 0;
        for (const auto& [y, c0] : counts[0][g]) {
            double mn = 1e300, mn_lo = 1e300;
            for (std::size_t i = 0; i < small_set.size(); ++i) {
                const auto it = counts[i][g].find(y);
                const std::size_t c = it == counts[i][g].end() ? 0 : it->second;
                const std::size_t n = conditioned ? alive[i][g] : n_samples;
                mn = std::min(mn, static_cast<double>(c) / static_cast<double>(n));
                mn_lo = std::min(mn_lo, wilson_interval(c, n).lo);
            }
            a1 += mn;
            lower += mn_lo;
            if (mn_lo > 0.0) ++support;
        }
        if (lower > best_lower || (lower == best_lower && a1 > best_a1)) {
            best_lower = lower;
            best_a1 = a1;
            best_s = s_window.at(g);
            best_support = support;
        }
    }
    cert.witnesses = {{"a1", best_a1},
                      {"a1_lower", best_lower},
                      {"s", best_s},
                      {"common_support", static_cast<double>(best_support)},
                      {"n_samples", static_cast<double>(n_samples)}};
    if (best_lower > 0.0) {
        cert.verdict = Verdict::holds;
    } else {
        cert.verdict = Verdict::inconclusive;
        cert.notes.push_back("no common component with positive lower confidence bound; CI too wide");
    }
    return cert;
}

template <TrajectorySimulator Sim>
CheckCertificate doeblin_probe(const Sim& sim, const std::vector<DiscreteState>& small_set,
                               const TimeGrid& s_window, std::size_t n_samples, const RngStream& rng,
                               bool conditioned = false, ExecPolicy policy = ExecPolicy::parallel) {
    return doeblin_probe(sim, small_set, s_window, n_samples, rng, [](const DiscreteState& x) { return x; },
                         conditioned, policy);
}

/// D_n = inf_{x in starts} P_x(X_s in target), with a Wilson lower bound.
template <TrajectorySimulator Sim>
CheckCertificate return_probability_probe(const Sim& sim, const std::vector<typename Sim::State>& starts, double s,
                                          const std::function<bool(const typename Sim::State&)>& in_target,
                                          std::size_t n_samples, const RngStream& rng,
                                          ExecPolicy policy = ExecPolicy::parallel) {
    using State = typename Sim::State;
    require(!starts.empty(), "return_probability_probe: no start states");
    require(s > 0.0, "return_probability_probe: horizon must be positive");
    SimBatchConfig cfg;
    cfg.n_trajectories = n_samples;
    cfg.horizon = s;
    cfg.record_grid = {0.0, s, 1};
    CheckCertificate cert;
    cert.check = "return_probability";
    cert.qualifier = "empirical";
    cert.seed = rng.seed();
    cert.domain = std::to_string(starts.size()) + " start states at s = " + std::to_string(s);
    double d_n = 1.0, d_lo = 1.0;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        std::size_t hits = 0;
        for_each_trajectory(
            sim, EmpiricalMeasure<State>::dirac(starts[i]), cfg, rng.child(i),
            [&](std::uint64_t, const Trajectory<State>& path) {
                if (path.alive_at(1) && in_target(path.states[1])) ++hits;
            },
            policy);
        const double p = static_cast<double>(hits) / static_cast<double>(n_samples);
        if (p < d_n) {
            d_n = p;
            worst = i;
        }
        d_lo = std::min(d_lo, wilson_interval(hits, n_samples).lo);
    }
    cert.witnesses = {{"D_n", d_n}, {"D_n_lower", d_lo}, {"s", s}};
    if (d_lo > 0.0) {
        cert.verdict = Verdict::holds;
    } else {
        cert.verdict = Verdict::inconclusive;
        cert.notes.push_back("lower confidence bound is zero at " + to_string(starts[worst]));
    }
    return cert;
}

// ---------------------------------------------------------------------------
// Harnack ratio

struct HarnackReport {
    std::vector<double> t;
    std::vector<double> ratio;
    std::vector<double> lo;  // max lower bound / min upper bound
    std::vector<double> hi;  // max upper bound / min lower bound
    CheckCertificate certificate;
};

/// sup_x P_x(t < tau) / inf_x P_x(t < tau) over the states, from the exact
/// semigroup of the truncation.
std::vector<double> harnack_ratio_exact(const bd::Truncation& tr, const std::vector<DiscreteState>& states,
                                        const TimeGrid& t_grid);

/// Shared verdict: holds iff the ratio curve is finite and flat over the last
/// half of the resolved instants; C_m is the largest upper bound on the curve.
void harnack_verdict(HarnackReport& rep, std::size_t requested_points);

template <TrajectorySimulator Sim>
HarnackReport harnack_ratio_probe(const Sim& sim, const std::vector<typename Sim::State>& states,
                                  const TimeGrid& t_grid, std::size_t mc_budget, const RngStream& rng,
                                  ExecPolicy policy = ExecPolicy::parallel) {
    using State = typename Sim::State;
    require(!states.empty(), "harnack_ratio_probe: no states");
    require(mc_budget > 0, "harnack_ratio_probe: zero budget");
    t_grid.validate();
    SimBatchConfig cfg;
    cfg.n_trajectories = mc_budget;
    cfg.horizon = t_grid.last();
    cfg.record_grid = t_grid;
    std::vector<std::vector<std::size_t>> alive(states.size(), std::vector<std::size_t>(t_grid.size(), 0));
    for (std::size_t i = 0; i < states.size(); ++i) {
        for_each_trajectory(
            sim, EmpiricalMeasure<State>::dirac(states[i]), cfg, rng.child(i),
            [&](std::uint64_t, const Trajectory<State>& path) {
                for (std::size_t g = 0; g < t_grid.size(); ++g)
                    if (path.alive_at(g)) ++alive[i][g];
            },
            policy);
    }
    HarnackReport rep;
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
        std::size_t min_count = mc_budget;
        double pmax = 0.0, pmin = 1.0, lo_max = 0.0, lo_min = 1.0, hi_max = 0.0, hi_min = 1.0;
        for (std::size_t i = 0; i < states.size(); ++i) {
            min_count = std::min(min_count, alive[i][g]);
            const double p = static_cast<double>(alive[i][g]) / static_cast<double>(mc_budget);
            const Interval ci = wilson_interval(alive[i][g], mc_budget);
            pmax = std::max(pmax, p);
            pmin = std::min(pmin, p);
            lo_max = std::max(lo_max, ci.lo);
            lo_min = std::min(lo_min, ci.lo);
            hi_max = std::max(hi_max, ci.hi);
            hi_min = std::min(hi_min, ci.hi);
        }
        if (min_count < kMinResolvedCount) break;
        rep.t.push_back(t_grid.at(g));
        rep.ratio.push_back(pmax / pmin);
        rep.lo.push_back(lo_max / hi_min);
        rep.hi.push_back(hi_max / lo_min);
    }
    rep.certificate.qualifier = "empirical";
    rep.certificate.seed = rng.seed();
    rep.certificate.domain = std::to_string(states.size()) + " states, " + std::to_string(mc_budget) + " paths each";
    harnack_verdict(rep, t_grid.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Exponential moments of the return time

/// E_x[exp(lambda (tau_U ^ tau))] with U = {|m| <= n}, for birth-death chains,
/// by Gillespie simulation stopped on entering U or absorption. Starts should
/// be ordered by distance; the certificate holds when the estimates over the
/// outer half of the starts agree within 10% or within their 95% intervals.
/// A single path carrying more than 10% of a start's total, or a path that
/// trips the event guard, makes the verdict inconclusive.
struct ExpoMomentRow {
    DiscreteState start;
    double moment = 0.0;
    double se = 0.0;
    double max_exponent = 0.0;
    double max_share = 0.0;
    std::size_t guard_tripped = 0;
};

struct ExpoMomentReport {
    std::vector<ExpoMomentRow> rows;
    CheckCertificate certificate;
};

ExpoMomentReport expo_moment_probe(const bd::BDModel& model, const std::vector<DiscreteState>& starts, Count n,
                                   double lambda, std::size_t mc_budget, const RngStream& rng,
                                   ExecPolicy policy = ExecPolicy::parallel, std::uint64_t max_events = 10'000'000);

} // namespace qsdlab::lyap
