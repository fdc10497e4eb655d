#pragma once

#include "qsdlab/bd/model.hpp"
#include "qsdlab/bd/series.hpp"
#include "qsdlab/core/parallel.hpp"
#include "qsdlab/lyapunov/certificate.hpp"

#include <optional>
#include <vector>

namespace qsdlab::bd {

inline constexpr double kSliceBudget = 1e7;

/// A "holds eventually" verdict on [k_lo, k_hi] requires the inequality to
/// hold on a terminal run [k0, k_hi] covering at least this fraction of the
/// range; a failure inside that final stretch counts as a violation.
inline constexpr double kTailFraction = 0.25;

/// Largest admissible start of the terminal run on [k_lo, k_hi].
Count tail_cutoff(Count k_lo, Count k_hi);

struct SliceStats {
    Count k = 0;
    double dbar = 0.0;
    double dunder = 0.0;
    bool exact = true;  // false: closed-form bounds (dbar over-, dunder under-estimated)
};

/// dbar(k) = sup_{|n|=k} |n| sum_i 1{n_i=1} d_i(n),
/// dunder(k) = inf_{|n|=k} sum_i n_i [1{n_i!=1} d_i(n) - b_i(n)], by enumeration.
/// Throws BudgetExceeded when the slice holds more than `budget` states.
SliceStats dbar_dunder(const BDModel& model, Count k, ExecPolicy policy = ExecPolicy::parallel,
                       double budget = kSliceBudget);

/// Closed-form bounds for LV models: dbar(k) <= k sum_i (mu_i + c_ii + max_{j!=i} c_ij (k-1)) and
/// dunder(k) >= k^2 m + k min_i(mu_i - lambda_i) - sum_i (mu_i + c_ii + max_{j!=i} c_ij (k-1)),
/// with m the minimum of y'(c - gamma)y over the unit simplex.
SliceStats dbar_dunder_lv_bounds(const BDModel& model, Count k);

/// Enumeration within budget, LV closed-form bounds beyond it.
SliceStats slice_stats(const BDModel& model, Count k, ExecPolicy policy = ExecPolicy::parallel,
                       double budget = kSliceBudget);

/// min_{y in simplex} y' S y for symmetric S, by enumerating faces and solving
/// the stationarity system on each.
double simplex_quadratic_min(const std::vector<std::vector<double>>& S);

/// dunder(k) >= eta dbar(k) eventually on [k_lo, k_hi], and dunder(k)/k^{1+eta}
/// increasing over the terminal run.
lyap::CheckCertificate check_assumption_pnm(const BDModel& model, double eta, Count k_lo, Count k_hi,
                                            ExecPolicy policy = ExecPolicy::parallel);

/// Same check from precomputed statistics for k = k_lo..k_hi.
lyap::CheckCertificate check_assumption_pnm(const std::vector<SliceStats>& stats, double eta);

std::vector<SliceStats> slice_stats_range(const BDModel& model, Count k_lo, Count k_hi,
                                          ExecPolicy policy = ExecPolicy::parallel);

struct EtaSearch {
    double eta;
    lyap::CheckCertificate certificate;
};

/// Largest eta in {2^-1, ..., 2^-12} for which the check holds.
std::optional<EtaSearch> auto_eta(const BDModel& model, Count k_lo, Count k_hi,
                                  ExecPolicy policy = ExecPolicy::parallel);

struct BDParamSelection {
    BDLyapunovParams params;
    Count k_star = 0;  // dunder - dbar/(beta-1) >= 0 on [k_star, k_check]
    lyap::CheckCertificate certificate;
};

/// Smallest beta on the grid 1 + 0.05 j (j = 1..2000) with dunder(k) - dbar(k)/(beta-1) >= 0 on a
/// terminal run of [k_lo, k_check] starting no later than where dunder >= eta dbar starts; then
/// alpha = 1 + eta/2 and epsilon = eta/(2(beta-1)).
BDParamSelection select_bd_params(const BDModel& model, double eta, Count k_lo, Count k_check,
                                  ExecPolicy policy = ExecPolicy::parallel);

/// Condition (a) by slice enumeration: -Lphi <= 0 on |n| >= k*, C = max over |n| < k* of (-Lphi)^+.
/// Also counts states where the lower bound |n|^{-beta}[dunder - dbar/(beta-1)] exceeds the exact Lphi.
lyap::CheckCertificate check_bd_condition_a(const BDModel& model, const BDLyapunovParams& params, Count k_lo,
                                            Count k_hi, ExecPolicy policy = ExecPolicy::parallel);

/// Condition (b) by slice enumeration: LV + C' V^{1+eps}/phi^eps <= 0 on |n| >= m*, and
/// C'' = max over |n| < m* of (LV + C' V^{1+eps}/phi^eps)^+ / phi.
lyap::CheckCertificate check_bd_condition_b(const BDModel& model, const BDLyapunovParams& params, Count k_lo,
                                            Count k_hi, double c_prime = 1.0,
                                            ExecPolicy policy = ExecPolicy::parallel);

} // namespace qsdlab::bd
