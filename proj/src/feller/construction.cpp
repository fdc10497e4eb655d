#include "qsdlab/feller/construction.hpp"

#include "qsdlab/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qsdlab::feller {

namespace {

double rel_gap(double x, double y) { return std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)}); }

double jet_gap(const Jet& l, const Jet& r) {
    return std::max({rel_gap(l.v, r.v), rel_gap(l.d1, r.d1), rel_gap(l.d2, r.d2)});
}

} // namespace

void FellerAssumptionParams::validate() const {
    require(a > 0.0 && std::isfinite(a), "Feller assumption: a must be positive");
    require(eta > 0.0 && eta < 1.0, "Feller assumption: eta must lie in (0, 1)");
    require(B_a > a, "Feller assumption: B_a must exceed a");
    require(C_a > 0.0 && D_a > 0.0, "Feller assumption: C_a and D_a must be positive");
}

nlohmann::json FellerAssumptionParams::to_json() const {
    return {{"a", a}, {"eta", eta}, {"B_a", B_a}, {"C_a", C_a}, {"D_a", D_a}};
}

double c_beta(double a, double B, double beta) {
    const double u = a / B - 1.0;
    const double t = std::exp2(-beta);
    const double num = 1.0 - t + beta * t * u - beta * (beta + 1.0) * 0.5 * t * u * u;
    return num / std::pow(a - B, 4);
}

Jet smoothstep(double t) {
    const double t2 = t * t;
    return {t2 * t * (10.0 + t * (-15.0 + 6.0 * t)), 30.0 * t2 * (1.0 - t) * (1.0 - t), 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)};
}

HBetaFunction::HBetaFunction(double a, double B, double beta) : a_(a), B_(B), beta_(beta) {
    require(a > 0.0 && B > a, "h_beta: need 0 < a < B");
    require(beta > 0.0 && std::isfinite(beta), "h_beta: beta must be positive");
    C_ = c_beta(a, B, beta);
    const double t = std::exp2(-beta);
    p_ = {t, -beta * t / B, beta * (beta + 1.0) * t * 0.5 / (B * B)};
}

Jet HBetaFunction::p2(double x) const {
    const double u = x - B_;
    const double u2 = u * u;
    return {p_[0] + u * (p_[1] + u * p_[2]) + C_ * u2 * u2, p_[1] + 2.0 * p_[2] * u + 4.0 * C_ * u2 * u,
            2.0 * p_[2] + 12.0 * C_ * u2};
}

Jet HBetaFunction::piece(Piece which, double x) const {
    switch (which) {
    case Piece::quadratic: {
        const double k = 4.0 / (a_ * a_);
        return {k * x * x, 2.0 * k * x, 2.0 * k};
    }
    case Piece::blend: {
        const Jet q = piece(Piece::quadratic, x);
        const Jet p = p2(x);
        Jet s = smoothstep(2.0 * x / a_ - 1.0);
        s.d1 *= 2.0 / a_;
        s.d2 *= 4.0 / (a_ * a_);
        return {q.v * (1.0 - s.v) + s.v * p.v, q.d1 * (1.0 - s.v) - q.v * s.d1 + s.d1 * p.v + s.v * p.d1,
                q.d2 * (1.0 - s.v) - 2.0 * q.d1 * s.d1 - q.v * s.d2 + s.d2 * p.v + 2.0 * s.d1 * p.d1 + s.v * p.d2};
    }
    case Piece::quartic:
        return p2(x);
    case Piece::tail: {
        const double v = std::pow(B_ / (2.0 * x), beta_);
        return {v, -beta_ * v / x, beta_ * (beta_ + 1.0) * v / (x * x)};
    }
    }
    return {};
}

Jet HBetaFunction::operator()(double x) const {
    if (x <= 0.0) return {0.0, 0.0, 8.0 / (a_ * a_)};
    if (x <= 0.5 * a_) return piece(Piece::quadratic, x);
    if (x <= a_) return piece(Piece::blend, x);
    if (x <= B_) return piece(Piece::quartic, x);
    return piece(Piece::tail, x);
}

double HBetaFunction::junction_mismatch() const {
    return std::max({jet_gap(piece(Piece::quadratic, 0.5 * a_), piece(Piece::blend, 0.5 * a_)),
                     jet_gap(piece(Piece::blend, a_), piece(Piece::quartic, a_)),
                     jet_gap(piece(Piece::quartic, B_), piece(Piece::tail, B_))});
}

nlohmann::json HBetaFunction::to_json() const {
    return {{"a", a_},           {"B_a", B_},       {"beta", beta_},      {"C_beta", C_},
            {"p2_constant", p_[0]}, {"p2_linear", p_[1]}, {"p2_quadratic", p_[2]},
            {"blend", "smoothstep 6t^5-15t^4+10t^3, t = 2x/a - 1"}};
}

nlohmann::json MConstants::to_json() const {
    return {{"M", M}, {"M_prime", M1}, {"M_second", M2}, {"beta_span", beta_span}, {"grid_step", grid_step}};
}

MConstants compute_M(const FellerAssumptionParams& params) {
    params.validate();
    const double a = params.a, B = params.B_a;
    MConstants out;
    const double step = out.grid_step;
    const double beta_max = 200.0;
    // Last grid point with C_beta <= 0; past it C_beta stays positive on the grid.
    double last_bad = -1.0;
    for (int j = 1; j * step <= beta_max; ++j) {
        const double beta = j * step;
        if (!(c_beta(a, B, beta) > 0.0)) last_bad = beta;
    }
    if (last_bad < 0.0) {
        out.M = step;
    } else {
        double lo = last_bad, hi = last_bad + step;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (c_beta(a, B, mid) > 0.0 ? hi : lo) = mid;
        }
        out.M = hi;
    }
    require(c_beta(a, B, out.M) > 0.0, "compute_M: C_beta not positive at the returned M");

    const int n_x = 400;
    for (double beta = out.M; beta <= out.M + out.beta_span + 1e-9; beta += 0.5) {
        const HBetaFunction h(a, B, beta);
        for (int i = 0; i <= n_x; ++i) {
            const double x = a * (0.5 + 0.5 * i / n_x);
            const Jet j = h(x);
            out.M1 = std::max(out.M1, std::abs(j.d1));
            out.M2 = std::max(out.M2, std::abs(j.d2));
        }
    }
    return out;
}

double select_feller_beta(const FellerAssumptionParams& params, const MConstants& m) {
    return m.M + std::max(2.0, params.a * m.M1) / params.C_a + 1.0;
}

HBetaFunction build_h_beta(const FellerAssumptionParams& params, double beta, const MConstants& m) {
    params.validate();
    if (beta < m.M) {
        throw PreconditionError("build_h_beta: beta = " + std::to_string(beta) + " is below M = " +
                                std::to_string(m.M) + " (C_beta would not be positive)");
    }
    return HBetaFunction(params.a, params.B_a, beta);
}

HBetaFunction build_h_beta(const FellerAssumptionParams& params, double beta) {
    return build_h_beta(params, beta, compute_M(params));
}

double g_gamma_lower(double eta) { return eta * std::exp2(-2.0 - eta / 2.0); }

double default_g_exponent(double eta) { return 0.5 * (g_gamma_lower(eta) + 1.0); }

GFunction::GFunction(double gamma_exp, double eta, double delta) : gamma_(gamma_exp), eta_(eta), delta_(delta) {
    require(eta > 0.0 && eta < 1.0, "g: eta must lie in (0, 1)");
    require(gamma_exp > 0.0 && gamma_exp < 1.0, "g: exponent must lie in (0, 1)");
    const Jet l = power_piece(1.0);
    const Jet r = tail_piece(2.0);
    const double c0 = l.v, c1 = l.d1, c2 = l.d2 / 2.0;
    const double R0 = r.v - (c0 + c1 + c2);
    const double R1 = r.d1 - (c1 + 2.0 * c2);
    const double R2 = r.d2 - 2.0 * c2;
    c_ = {c0, c1, c2, 10.0 * R0 - 4.0 * R1 + R2 / 2.0, -15.0 * R0 + 7.0 * R1 - R2, 6.0 * R0 - 3.0 * R1 + R2 / 2.0};
}

Jet GFunction::power_piece(double x) const {
    const double v = std::pow(x, gamma_);
    return {v, gamma_ * v / x, gamma_ * (gamma_ - 1.0) * v / (x * x)};
}

Jet GFunction::bridge_piece(double x) const {
    const double u = x - 1.0;
    double v = 0.0, d1 = 0.0, d2 = 0.0;
    for (int k = 5; k >= 0; --k) {
        d2 = d2 * u + 2.0 * d1;
        d1 = d1 * u + v;
        v = v * u + c_[k];
    }
    return {v, d1, d2};
}

Jet GFunction::tail_piece(double x) const {
    const double s = std::pow(x, -eta_ / 2.0);
    const double e = eta_ / 2.0;
    return {delta_ - s, e * s / x, -e * (e + 1.0) * s / (x * x)};
}

Jet GFunction::operator()(double x) const {
    if (x <= 0.0) return {0.0, 0.0, 0.0};
    if (x <= 1.0) return power_piece(x);
    if (x <= 2.0) return bridge_piece(x);
    return tail_piece(x);
}

double GFunction::junction_mismatch() const {
    return std::max(jet_gap(power_piece(1.0), bridge_piece(1.0)), jet_gap(bridge_piece(2.0), tail_piece(2.0)));
}

int GFunction::shape_violations(int n) const {
    int bad = 0;
    for (int i = 0; i < n; ++i) {
        const Jet j = bridge_piece(1.0 + static_cast<double>(i) / (n - 1));
        bad += !(j.d1 > 0.0) || j.d2 > 0.0;
    }
    return bad;
}

nlohmann::json GFunction::to_json() const {
    return {{"gamma", gamma_}, {"eta", eta_}, {"delta", delta_}, {"bridge", c_}};
}

GFunction build_g(const FellerAssumptionParams& params, double gamma_exp) {
    params.validate();
    const double eta = params.eta;
    const double lo = g_gamma_lower(eta);
    if (!(gamma_exp > lo && gamma_exp < 1.0)) {
        throw PreconditionError("build_g: exponent " + std::to_string(gamma_exp) + " outside (" + std::to_string(lo) +
                                ", 1)");
    }
    // Chord slope delta - 2^(-eta/2) - 1 placed at fraction theta between g'(2) and g'(1).
    const double thetas[] = {0.5, 0.4, 0.6, 0.3, 0.7, 0.2, 0.8, 0.1, 0.9};
    int best = -1;
    for (double theta : thetas) {
        const double chord = lo + theta * (gamma_exp - lo);
        const GFunction g(gamma_exp, eta, 1.0 + std::exp2(-eta / 2.0) + chord);
        const int bad = g.shape_violations();
        if (bad == 0) return g;
        best = best < 0 ? bad : std::min(best, bad);
    }
    throw NumericalError("build_g: no chord slope gives an increasing concave bridge on [1, 2] (best attempt had " +
                         std::to_string(best) + " grid points with g' <= 0 or g'' > 0)");
}

} // namespace qsdlab::feller
