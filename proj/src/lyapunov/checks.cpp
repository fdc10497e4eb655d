#include "qsdlab/lyapunov/checks.hpp"

namespace qsdlab::lyap {

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
    require(lo > 0.0 && hi > lo && points >= 2, "log_grid: need 0 < lo < hi and at least 2 points");
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i)
        g[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) / (points - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

NonlinearReport fit_nonlinear_inequality(std::vector<MeasureEvaluation> rows, double epsilon, std::size_t skipped) {
    NonlinearReport rep;
    rep.rows = std::move(rows);
    auto& cert = rep.certificate;
    cert.check = "nonlinear_inequality";
    cert.qualifier = "empirical";
    cert.domain = std::to_string(rep.rows.size()) + " sampled probability measures";
    if (skipped > 0) cert.notes.push_back(std::to_string(skipped) + " measures skipped with mu(phi) = 0");
    const std::vector<double> grid = log_grid(1e-3, 1e3, 61);

    std::vector<NonlinearFit> cand;
    for (double B : grid) {
        double amin = -1e300;
        for (const auto& r : rep.rows) amin = std::max(amin, (r.lhs + B * r.feature) / r.mu_phi);
        const auto it = std::lower_bound(grid.begin(), grid.end(), amin);
        if (it != grid.end()) cand.push_back({*it, B});
    }
    for (double A : grid) {
        double bmax = 1e300;
        for (const auto& r : rep.rows)
            if (r.feature > 0.0) bmax = std::min(bmax, (A * r.mu_phi - r.lhs) / r.feature);
        const auto it = std::upper_bound(grid.begin(), grid.end(), bmax);
        if (it != grid.begin()) cand.push_back({A, *(it - 1)});
    }
    for (const auto& c : cand) {
        const bool dominated = std::any_of(cand.begin(), cand.end(), [&](const NonlinearFit& o) {
            return o.A <= c.A && o.B >= c.B && (o.A < c.A || o.B > c.B);
        });
        const bool seen = std::any_of(rep.pareto.begin(), rep.pareto.end(),
                                      [&](const NonlinearFit& o) { return o.A == c.A && o.B == c.B; });
        if (!dominated && !seen) rep.pareto.push_back(c);
    }
    std::sort(rep.pareto.begin(), rep.pareto.end(), [](const NonlinearFit& x, const NonlinearFit& y) { return x.A < y.A; });

    std::size_t holder_bad = 0;
    for (const auto& r : rep.rows) holder_bad += r.holder_lhs > r.holder_rhs * (1.0 + 1e-12);
    cert.witnesses["epsilon"] = epsilon;
    cert.witnesses["measures"] = static_cast<double>(rep.rows.size());
    cert.witnesses["holder_violations"] = static_cast<double>(holder_bad);
    cert.witnesses["pareto_points"] = static_cast<double>(rep.pareto.size());
    if (rep.pareto.empty()) {
        cert.verdict = Verdict::violated;
        double worst = -1e300;
        const MeasureEvaluation* w = nullptr;
        for (const auto& r : rep.rows) {
            const double need = (r.lhs + 1e-3 * r.feature) / r.mu_phi;
            if (need > worst) {
                worst = need;
                w = &r;
            }
        }
        cert.counterexamples.push_back({"no (A, B) in [1e-3, 1e3]^2 dominates the sampled measures", {},
                                        {{"required_A_at_B_min", worst}, {"lhs", w ? w->lhs : 0.0}}});
        return rep;
    }
    rep.fitted = *std::max_element(rep.pareto.begin(), rep.pareto.end(),
                                   [](const NonlinearFit& x, const NonlinearFit& y) { return x.B / x.A < y.B / y.A; });
    std::size_t bad = 0;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const auto& r = rep.rows[i];
        const double rhs = rep.fitted.A * r.mu_phi - rep.fitted.B * r.feature;
        if (r.lhs > rhs + 1e-12 * (std::abs(r.lhs) + std::abs(rhs))) {
            ++bad;
            if (cert.counterexamples.size() < 20)
                cert.counterexamples.push_back({"measure #" + std::to_string(i) + " violates the fitted inequality",
                                                {},
                                                {{"lhs", r.lhs}, {"rhs", rhs}}});
        }
    }
    cert.witnesses["A"] = rep.fitted.A;
    cert.witnesses["B"] = rep.fitted.B;
    cert.witnesses["violations"] = static_cast<double>(bad);
    if (holder_bad > 0) cert.counterexamples.push_back({"Hoelder inequality fails numerically", {}, {}});
    cert.verdict = bad == 0 && holder_bad == 0 ? Verdict::holds : Verdict::violated;
    return rep;
}

} // namespace qsdlab::lyap
