#include "qsdlab/feller/assumption.hpp"

#include "qsdlab/core/error.hpp"

#include <algorithm>
#include <cmath>

namespace qsdlab::feller {

void LogGrid::validate() const {
    require(lo > 0.0 && hi > lo && std::isfinite(hi), "log grid: need 0 < lo < hi");
    require(points >= 2, "log grid: need at least 2 points per axis");
}

std::vector<double> LogGrid::axis() const {
    validate();
    std::vector<double> out(points);
    const double l0 = std::log(lo), l1 = std::log(hi);
    for (std::size_t i = 0; i < points; ++i) out[i] = std::exp(l0 + (l1 - l0) * static_cast<double>(i) / (points - 1));
    out.front() = lo;
    out.back() = hi;
    return out;
}

nlohmann::json LogGrid::to_json() const { return {{"lo", lo}, {"hi", hi}, {"points_per_axis", points}}; }

LogGrid default_grid(const FellerAssumptionParams& params, std::size_t d) {
    return {1e-4, 10.0 * params.B_a, d == 2 ? std::size_t{200} : std::size_t{60}};
}

namespace {

// sup over x >= 0 of r - c (x - K)^+ + x^eta.
double sup_growth_plus_power(double r, double c, double K, double eta) {
    double best = r + std::pow(K, eta);
    const double xs = std::pow(eta / c, 1.0 / (1.0 - eta));
    if (xs > K) best = std::max(best, r - c * (xs - K) + std::pow(xs, eta));
    return best;
}

// Visits every point of the d-dimensional tensor grid by flat index.
void unflatten(std::size_t flat, const std::vector<double>& axis, std::vector<double>& x) {
    const std::size_t p = axis.size();
    for (std::size_t k = x.size(); k-- > 0;) {
        x[k] = axis[flat % p];
        flat /= p;
    }
}

} // namespace

FellerAssumptionParams auto_assumption_params(const FellerModel& model, double eta) {
    require(eta > 0.0 && eta < 1.0, "auto_assumption_params: eta must lie in (0, 1)");
    const FellerModel rm = model.rescaled();
    const FellerLV* lv = rm.lv();
    if (!lv) {
        throw PreconditionError("auto_assumption_params: model '" + model.name() +
                                "' has no LV parameterization; supply a, eta, B_a, C_a, D_a explicitly");
    }
    const std::size_t d = rm.dimension();
    const double K = lv->threshold;
    double sup = 0.0;
    for (std::size_t i = 0; i < d; ++i) sup = std::max(sup, sup_growth_plus_power(lv->r[i], lv->c[i][i], K, eta));
    FellerAssumptionParams p;
    p.eta = eta;
    p.a = std::pow(sup + 0.1, 1.0 / eta);
    double b = 2.0 * p.a;
    for (std::size_t j = 0; j < d; ++j) b = std::max(b, 2.0 * std::max(lv->r[j] + lv->c[j][j] * K, 0.0) / lv->c[j][j]);
    p.B_a = 1.1 * b;
    p.C_a = 1.0;
    double off = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            if (i != j) s += lv->c[i][j];
        off += s;
        if (s > 0.0) p.C_a = std::min(p.C_a, lv->c[j][j] / (2.0 * s));
    }
    p.D_a = 1.0 + p.B_a * off;
    for (std::size_t i = 0; i < d; ++i) p.D_a += std::max(lv->c[i][i] * p.a - lv->r[i], 0.0);
    return p;
}

lyap::CheckCertificate check_feller_assumption(const FellerModel& model, const FellerAssumptionParams& params,
                                               const LogGrid& grid, ExecPolicy policy) {
    params.validate();
    const FellerModel rm = model.rescaled();
    const std::size_t d = rm.dimension();
    std::vector<double> axis = grid.axis();
    for (double extra : {params.a, params.B_a})
        if (extra > grid.lo && extra < grid.hi) axis.push_back(extra);
    std::sort(axis.begin(), axis.end());
    axis.erase(std::unique(axis.begin(), axis.end()), axis.end());

    std::size_t n = 1;
    for (std::size_t k = 0; k < d; ++k) n *= axis.size();
    const double a_eta = std::pow(params.a, params.eta);
    // Per point: worst slack of the first inequality and slack of the second.
    std::vector<double> slack1(n), slack2(n);
    parallel_for_static(policy, static_cast<std::int64_t>(n), [&](std::int64_t f) {
        std::vector<double> x(d), r(d);
        unflatten(static_cast<std::size_t>(f), axis, x);
        rm.growth(x, r);
        double s1 = 1e300, big = 0.0, small = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            s1 = std::min(s1, a_eta - std::pow(x[i], params.eta) - r[i]);
            if (x[i] >= params.B_a) big += r[i];
            if (x[i] <= params.a) small += r[i];
        }
        slack1[f] = s1;
        slack2[f] = params.C_a * (small + params.D_a) - big;
    });

    lyap::CheckCertificate cert;
    cert.check = "feller_assumption";
    cert.qualifier = "grid";
    cert.domain = "rescaled log grid [" + std::to_string(grid.lo) + ", " + std::to_string(grid.hi) + "]^" +
                  std::to_string(d) + ", " + std::to_string(axis.size()) + " points per axis";
    double m1 = 1e300, m2 = 1e300;
    std::size_t fails = 0;
    std::vector<double> x(d);
    for (std::size_t f = 0; f < n; ++f) {
        m1 = std::min(m1, slack1[f]);
        m2 = std::min(m2, slack2[f]);
        if (slack1[f] < 0.0 || slack2[f] < 0.0) {
            ++fails;
            if (cert.counterexamples.size() < 20) {
                unflatten(f, axis, x);
                const ContinuousState xs = model.from_rescaled(ContinuousState(x));
                cert.counterexamples.push_back({slack1[f] < 0.0 ? "r_i(x) > a^eta - x_i^eta"
                                                                : "competition inequality fails",
                                                xs.coords,
                                                {{"growth_bound_slack", slack1[f]}, {"competition_slack", slack2[f]}}});
            }
        }
    }
    cert.verdict = fails == 0 ? lyap::Verdict::holds : lyap::Verdict::violated;
    cert.witnesses = {{"a", params.a},     {"eta", params.eta}, {"B_a", params.B_a},
                      {"C_a", params.C_a}, {"D_a", params.D_a}, {"min_growth_bound_slack", m1},
                      {"min_competition_slack", m2}, {"failures", static_cast<double>(fails)}};
    return cert;
}

} // namespace qsdlab::feller
