#include "qsdlab/lyapunov/probes.hpp"

#include "qsdlab/core/parallel.hpp"

#include <numeric>

namespace qsdlab::lyap {

PlateauTest plateau_test(std::span<const double> t, std::span<const double> v, double max_drift,
                         std::span<const double> lo, std::span<const double> hi) {
    require(t.size() == v.size(), "plateau_test: size mismatch");
    require(lo.size() == hi.size() && (lo.empty() || lo.size() == t.size()), "plateau_test: band size mismatch");
    require(t.size() >= 6, "plateau_test: need at least 6 points");
    const std::size_t first = t.size() / 2;
    const auto tt = t.subspan(first), vv = v.subspan(first);
    const LinearFit f = linear_fit(tt, vv);
    double mean = 0.0;
    for (double x : vv) mean += x;
    mean /= static_cast<double>(vv.size());
    PlateauTest p;
    p.slope = f.slope;
    p.relative_drift = std::abs(f.slope) * (tt.back() - tt.front()) / std::abs(mean);
    const double q = student_t_quantile(0.975, static_cast<double>(vv.size() - 2));
    p.slope_covers_zero = std::abs(f.slope) <= q * f.slope_se;
    if (!lo.empty()) {
        const auto l = lo.subspan(first), h = hi.subspan(first);
        p.band_covers_constant = *std::max_element(l.begin(), l.end()) <= *std::min_element(h.begin(), h.end());
    }
    p.flat = p.relative_drift <= max_drift || p.slope_covers_zero || p.band_covers_constant;
    return p;
}

DoeblinCurve doeblin_exact(const bd::Truncation& tr, const std::vector<DiscreteState>& small_set,
                           const TimeGrid& s_window, bool conditioned) {
    require(!small_set.empty(), "doeblin_exact: empty small set");
    s_window.validate();
    std::vector<std::vector<double>> p(small_set.size(), std::vector<double>(tr.size(), 0.0));
    for (std::size_t i = 0; i < small_set.size(); ++i) {
        const auto idx = tr.index_of(small_set[i]);
        if (!idx) throw PreconditionError("doeblin_exact: " + to_string(small_set[i]) + " is outside the box");
        p[i][*idx] = 1.0;
        if (s_window.t0 > 0.0) p[i] = tr.propagate_left(p[i], s_window.t0);
    }
    DoeblinCurve out;
    for (std::size_t g = 0; g < s_window.size(); ++g) {
        if (g > 0)
            for (auto& q : p) q = tr.propagate_left(q, s_window.dt);
        std::vector<double> mass(small_set.size(), 1.0);
        if (conditioned)
            for (std::size_t i = 0; i < p.size(); ++i)
                mass[i] = std::accumulate(p[i].begin(), p[i].end(), 0.0);
        double a1 = 0.0;
        for (std::size_t k = 0; k < tr.size(); ++k) {
            double mn = 1e300;
            for (std::size_t i = 0; i < p.size(); ++i) mn = std::min(mn, p[i][k] / mass[i]);
            a1 += mn;
        }
        out.s.push_back(s_window.at(g));
        out.a1.push_back(a1);
    }
    return out;
}

std::vector<double> harnack_ratio_exact(const bd::Truncation& tr, const std::vector<DiscreteState>& states,
                                        const TimeGrid& t_grid) {
    require(!states.empty(), "harnack_ratio_exact: no states");
    t_grid.validate();
    std::vector<std::size_t> idx;
    for (const auto& x : states) {
        const auto i = tr.index_of(x);
        if (!i) throw PreconditionError("harnack_ratio_exact: " + to_string(x) + " is outside the box");
        idx.push_back(*i);
    }
    std::vector<double> u(tr.size(), 1.0);
    if (t_grid.t0 > 0.0) u = tr.propagate_right(u, t_grid.t0);
    std::vector<double> out;
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
        if (g > 0) u = tr.propagate_right(u, t_grid.dt);
        double mx = 0.0, mn = 1e300;
        for (std::size_t i : idx) {
            mx = std::max(mx, u[i]);
            mn = std::min(mn, u[i]);
        }
        out.push_back(mx / mn);
    }
    return out;
}

void harnack_verdict(HarnackReport& rep, std::size_t requested_points) {
    CheckCertificate& cert = rep.certificate;
    cert.check = "harnack_ratio";
    if (rep.t.size() < requested_points) {
        cert.notes.push_back("time grid truncated at t = " +
                             (rep.t.empty() ? std::string("start") : std::to_string(rep.t.back())) +
                             ": survival below Monte Carlo resolution");
    }
    if (rep.t.size() < 6) {
        cert.verdict = Verdict::inconclusive;
        cert.witnesses = {{"resolved_points", static_cast<double>(rep.t.size())}};
        cert.notes.push_back("too few resolved instants for a plateau test");
        return;
    }
    double c_m = 0.0;
    for (double h : rep.hi) c_m = std::max(c_m, h);
    const PlateauTest p = plateau_test(rep.t, rep.ratio, 0.1, rep.lo, rep.hi);
    cert.witnesses = {{"C_m", c_m},
                      {"ratio_last", rep.ratio.back()},
                      {"relative_drift", p.relative_drift},
                      {"t_resolved", rep.t.back()}};
    if (std::isfinite(c_m) && p.flat) {
        cert.verdict = Verdict::holds;
    } else {
        cert.verdict = Verdict::inconclusive;
        cert.notes.push_back("ratio curve still trending over the last half of the resolved window");
    }
}

ExpoMomentReport expo_moment_probe(const bd::BDModel& model, const std::vector<DiscreteState>& starts, Count n,
                                   double lambda, std::size_t mc_budget, const RngStream& rng, ExecPolicy policy,
                                   std::uint64_t max_events) {
    require(lambda > 0.0, "expo_moment_probe: lambda must be positive");
    require(mc_budget >= 2, "expo_moment_probe: need at least two paths");
    require(starts.size() >= 2, "expo_moment_probe: need at least two start states");
    for (const auto& x : starts) {
        require(x.dimension() == model.dimension(), "expo_moment_probe: dimension mismatch");
        require(!x.absorbed(), "expo_moment_probe: start " + to_string(x) + " is absorbed");
    }
    ExpoMomentReport rep;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        std::vector<double> exponent(mc_budget, 0.0);
        std::vector<char> tripped(mc_budget, 0);
        const RngStream base = rng.child(i);
        parallel_for(policy, static_cast<std::int64_t>(mc_budget), [&](std::int64_t j) {
            RngStream s = base.child(static_cast<std::uint64_t>(j));
            bd::RateScratch scratch(model.dimension());
            DiscreteState x = starts[i];
            double t = 0.0;
            std::uint64_t events = 0;
            while (total(x) > n && !x.absorbed()) {
                const double h = bd::gillespie_advance(model, x, s, scratch);
                if (!std::isfinite(h) || ++events >= max_events) {
                    tripped[static_cast<std::size_t>(j)] = 1;
                    break;
                }
                t += h;
            }
            exponent[static_cast<std::size_t>(j)] = lambda * t;
        });
        ExpoMomentRow row;
        row.start = starts[i];
        const double shift = *std::max_element(exponent.begin(), exponent.end());
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t j = 0; j < mc_budget; ++j) {
            const double w = std::exp(exponent[j] - shift);
            sum += w;
            sum2 += w * w;
            row.guard_tripped += tripped[j];
        }
        const double m = static_cast<double>(mc_budget);
        row.max_exponent = shift;
        row.max_share = 1.0 / sum;
        row.moment = std::exp(shift) * sum / m;
        const double var = std::max(0.0, sum2 / m - (sum / m) * (sum / m)) * m / (m - 1.0);
        row.se = std::exp(shift) * std::sqrt(var / m);
        rep.rows.push_back(row);
    }

    CheckCertificate& cert = rep.certificate;
    cert.check = "exponential_moments";
    cert.qualifier = "empirical";
    cert.seed = rng.seed();
    cert.domain = std::to_string(starts.size()) + " starts, U = {|m| <= " + std::to_string(n) + "}, " +
                  std::to_string(mc_budget) + " paths each";
    double sup = 0.0, max_exp = 0.0;
    bool heavy = false, guard = false;
    for (const auto& r : rep.rows) {
        sup = std::max(sup, r.moment);
        max_exp = std::max(max_exp, r.max_exponent);
        heavy = heavy || r.max_share > 0.1;
        guard = guard || r.guard_tripped > 0;
    }
    cert.witnesses = {{"sup_moment", sup}, {"lambda", lambda}, {"n", static_cast<double>(n)},
                      {"max_exponent", max_exp}};
    if (heavy || guard) {
        cert.verdict = Verdict::inconclusive;
        if (heavy) cert.notes.push_back("heavy tail: one path carries more than 10% of an estimate");
        if (guard) cert.notes.push_back("event guard tripped or frozen state outside U");
        return rep;
    }
    const std::size_t outer = rep.rows.size() / 2;
    double mx = 0.0, mn = 1e300, max_lo = 0.0, min_hi = 1e300;
    std::size_t arg_mx = outer;
    for (std::size_t i = outer; i < rep.rows.size(); ++i) {
        const auto& r = rep.rows[i];
        if (r.moment > mx) {
            mx = r.moment;
            arg_mx = i;
        }
        mn = std::min(mn, r.moment);
        max_lo = std::max(max_lo, r.moment - 1.96 * r.se);
        min_hi = std::min(min_hi, r.moment + 1.96 * r.se);
    }
    cert.witnesses["outer_spread"] = mx / mn - 1.0;
    if (mx <= 1.1 * mn || max_lo <= min_hi) {
        cert.verdict = Verdict::holds;
    } else {
        cert.verdict = Verdict::violated;
        const auto& r = rep.rows[arg_mx];
        cert.counterexamples.push_back({"moment keeps growing with the distance of the start", as_doubles(r.start),
                                        {{"moment", r.moment}, {"se", r.se}}});
    }
    return rep;
}

} // namespace qsdlab::lyap
