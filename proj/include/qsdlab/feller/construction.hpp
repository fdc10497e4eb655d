#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <string>

namespace qsdlab::feller {

/// Value and first two derivatives of a one-dimensional function.
struct Jet {
    double v = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

struct FellerAssumptionParams {
    double a = 1.0;
    double eta = 0.5;
    double B_a = 2.0;
    double C_a = 1.0;
    double D_a = 1.0;

    void validate() const;
    nlohmann::json to_json() const;
};

/// C_beta of the quartic correction, chosen so that P2(a) = 1.
double c_beta(double a, double B, double beta);

/// Smoothstep 6t^5 - 15t^4 + 10t^3 on t in [0, 1] (flat to second order at both ends).
Jet smoothstep(double t);

/// The four-piece function
///   4x^2/a^2 on [0, a/2], blend of that and P2 on [a/2, a], P2 on [a, B], (B/(2x))^beta on [B, inf).
class HBetaFunction {
public:
    enum class Piece { quadratic, blend, quartic, tail };

    HBetaFunction(double a, double B, double beta);

    double a() const noexcept { return a_; }
    double B() const noexcept { return B_; }
    double beta() const noexcept { return beta_; }
    double C_beta() const noexcept { return C_; }
    /// P2(x) = p[0] + p[1](x-B) + p[2](x-B)^2 + C_beta (x-B)^4.
    const std::array<double, 3>& p2_coefficients() const noexcept { return p_; }

    Jet operator()(double x) const;
    double value(double x) const { return (*this)(x).v; }

    /// A piece's own formula evaluated anywhere (junction checks compare neighbours).
    Jet piece(Piece which, double x) const;
    Jet p2(double x) const;

    /// Largest relative mismatch of value, first and second derivative across
    /// the junctions a/2, a, B.
    double junction_mismatch() const;

    nlohmann::json to_json() const;

private:
    double a_, B_, beta_, C_;
    std::array<double, 3> p_;
};

/// M: smallest beta on the search grid from which C_beta stays positive (then
/// P2 is decreasing and convex on (-inf, B]); M1, M2: sup of |h'|, |h''| over
/// [a/2, a] and beta in [M, M + beta_span].
struct MConstants {
    double M = 0.0;
    double M1 = 0.0;
    double M2 = 0.0;
    double beta_span = 200.0;
    double grid_step = 0.01;

    nlohmann::json to_json() const;
};

MConstants compute_M(const FellerAssumptionParams& params);

/// beta = M + max(2, a M1) / C_a + 1.
double select_feller_beta(const FellerAssumptionParams& params, const MConstants& m);

HBetaFunction build_h_beta(const FellerAssumptionParams& params, double beta, const MConstants& m);
HBetaFunction build_h_beta(const FellerAssumptionParams& params, double beta);

/// x^gamma on [0, 1], quintic Hermite bridge on [1, 2], delta - x^(-eta/2) on [2, inf).
class GFunction {
public:
    GFunction(double gamma_exp, double eta, double delta);

    double gamma_exp() const noexcept { return gamma_; }
    double eta() const noexcept { return eta_; }
    double delta() const noexcept { return delta_; }
    const std::array<double, 6>& bridge() const noexcept { return c_; }

    Jet operator()(double x) const;
    double value(double x) const { return (*this)(x).v; }

    /// Left and right formulas at 1 and 2, for junction checks.
    Jet power_piece(double x) const;
    Jet bridge_piece(double x) const;
    Jet tail_piece(double x) const;

    double junction_mismatch() const;
    /// Number of points of an n-point grid on [1, 2] where g' <= 0 or g'' > 0.
    int shape_violations(int n = 10000) const;

    nlohmann::json to_json() const;

private:
    double gamma_, eta_, delta_;
    std::array<double, 6> c_{};
};

/// Lower end of the admissible range for the exponent of g: eta 2^(-2-eta/2).
double g_gamma_lower(double eta);

/// Picks delta (chord-midpoint rule first, then nudged chord slopes) and
/// returns the first bridge passing the shape check on a 10^4-point grid.
GFunction build_g(const FellerAssumptionParams& params, double gamma_exp);

/// Midpoint of (eta 2^(-2-eta/2), 1).
double default_g_exponent(double eta);

} // namespace qsdlab::feller
