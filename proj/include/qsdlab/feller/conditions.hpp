#pragma once

#include "qsdlab/core/rng.hpp"
#include "qsdlab/core/stats.hpp"
#include "qsdlab/feller/assumption.hpp"
#include "qsdlab/feller/construction.hpp"
#include "qsdlab/feller/model.hpp"
#include "qsdlab/lyapunov/certificate.hpp"

#include <vector>

namespace qsdlab::feller {

/// V(x) = prod g(y_i), phi(x) = prod h_beta(y_i) with y the rescaled
/// coordinates. States are given in original units; generator images are
/// computed on the rescaled model, where they coincide with L V and L phi.
class FellerPair {
public:
    FellerPair(const FellerModel& model, HBetaFunction h, GFunction g);

    const FellerModel& model() const noexcept { return model_; }
    const FellerModel& rescaled_model() const noexcept { return rescaled_; }
    const HBetaFunction& h() const noexcept { return h_; }
    const GFunction& g() const noexcept { return g_; }

    double V(const ContinuousState& x) const;
    double phi(const ContinuousState& x) const;
    double LV(const ContinuousState& x) const;
    double Lphi(const ContinuousState& x) const;

    /// LV/V and Lphi/phi at a rescaled interior point y.
    double LV_over_V_rescaled(std::span<const double> y) const;
    double Lphi_over_phi_rescaled(std::span<const double> y) const;

    nlohmann::json to_json() const;

private:
    FellerModel model_;
    FellerModel rescaled_;
    HBetaFunction h_;
    GFunction g_;
};

/// Everything the Feller criterion needs, chosen automatically for an LV model.
struct FellerSetup {
    FellerAssumptionParams params;
    MConstants m;
    double beta = 0.0;
    double gamma_exp = 0.0;
    double epsilon = 0.0;
    FellerPair pair;

    nlohmann::json to_json() const;
};

/// epsilon = eta / (4 beta d), well inside beta d epsilon < eta / 2.
double default_feller_epsilon(double eta, double beta, std::size_t d);

FellerSetup auto_feller_setup(const FellerModel& model, double eta = 0.5);

struct FellerConditionReport {
    lyap::CheckCertificate condition_a;
    lyap::CheckCertificate condition_b;
    lyap::CheckCertificate combined;
};

/// Grid evaluation of -L phi <= 0 and LV + V^(1+eps)/phi^eps <= 0. The smallest
/// O_n = {1/(2n) < y_i < 2n} (rescaled) containing every failing grid point is
/// reported; a failure on the grid's outer layer is a violation. Witnesses:
/// C = max (-L phi)^+, C' = 1, C'' = max (LV + V^(1+eps)/phi^eps)^+ / phi over the
/// failing points, B' = max [sum (y_i^eta + 2/y_i) - L phi/phi].
FellerConditionReport check_feller_condition_report(const FellerPair& pair, const FellerAssumptionParams& params,
                                                    double epsilon, const LogGrid& grid, double eps_abs = 1e-10,
                                                    ExecPolicy policy = ExecPolicy::parallel);

lyap::CheckCertificate check_feller_conditions(const FellerPair& pair, const FellerAssumptionParams& params,
                                               double epsilon, const LogGrid& grid, double eps_abs = 1e-10,
                                               ExecPolicy policy = ExecPolicy::parallel);

struct SurvivalEstimate {
    ContinuousState state;
    double V = 0.0;
    std::uint64_t survivors = 0;
    std::uint64_t trials = 0;
    Interval ci;
};

struct SurvivalBoundReport {
    lyap::CheckCertificate certificate;
    std::vector<SurvivalEstimate> estimates;
};

/// Monte Carlo estimate of P_x(r0 < tau) for each state, with Wilson 95% intervals;
/// p0 is the smallest constant with upper bound <= p0 V(x) everywhere. Trajectory j
/// uses rng.child(j) for every state (common random numbers across states). States
/// with a coordinate <= eps_abs count as absorbed. Inconclusive when some
/// interval is wider than ci_width_target.
SurvivalBoundReport survival_bound_check(const FellerPair& pair, double r0, const std::vector<ContinuousState>& states,
                                         std::uint64_t mc_budget, const FellerScheme& scheme, const RngStream& rng,
                                         double ci_width_target = 0.1, ExecPolicy policy = ExecPolicy::parallel);

} // namespace qsdlab::feller
