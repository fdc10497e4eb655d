#pragma once

#include "qsdlab/core/measure.hpp"
#include "qsdlab/core/stats.hpp"
#include "qsdlab/qsd/conditioned.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace qsdlab::qsd {

/// value ~ C exp(-rate t) fitted by least squares on log value over the window
/// [first t with value <= 0.8 max, last t with value >= 10 x noise floor].
struct DecayFit {
    double rate = 0.0;
    double C = 0.0;
    double r_squared = 0.0;
    double rate_se = 0.0;
    Interval rate_ci{};  // 95%, Student t
    std::size_t i_lo = 0, i_hi = 0;
    double t_lo = 0.0, t_hi = 0.0;

    std::size_t points() const noexcept { return i_hi - i_lo + 1; }
    nlohmann::json to_json() const;
};

/// Throws NumericalError("insufficient decay resolved") when the window holds
/// fewer than 5 points, PreconditionError when the curve is not positive on it.
DecayFit fit_decay_rate(std::span<const double> t, std::span<const double> value,
                        std::span<const double> noise_floor);
DecayFit fit_decay_rate(std::span<const double> t, std::span<const double> value, double noise_floor);

/// TV between two empirical laws of n_a and n_b samples (n_b = 0: b is exact),
/// with the expected TV of pure sampling noise,
///   floor = sqrt(2/pi) sum_s sqrt(p_s (1 - p_s) (1/n_a + 1/n_b)),  p pooled,
/// and a normal interval tv +- 1.96 sqrt(sum_s p_a(1-p_a)/n_a + p_b(1-p_b)/n_b)
/// clipped to [0, 2].
struct NoisyTV {
    double tv = 0.0;
    double floor = 0.0;
    Interval ci{};
};

NoisyTV tv_with_noise(const EmpiricalMeasure<DiscreteState>& a, std::size_t n_a,
                      const EmpiricalMeasure<DiscreteState>& b, std::size_t n_b);

/// TV curve of an evolving conditional law against a reference, with the
/// decay fit of that curve and of the survival curve (lambda0).
struct ConvergenceReport {
    std::string reference;
    std::vector<double> t;
    std::vector<double> tv;
    std::vector<std::size_t> survivors;
    std::vector<double> ci_lo;
    std::vector<double> ci_hi;
    std::vector<double> noise_floor;
    std::optional<DecayFit> fit;
    std::string fit_error;
    std::optional<DecayFit> lambda0;
    std::string lambda0_error;

    /// Columns t, tv, survivors, ci_lo, ci_hi.
    void write_csv(std::ostream& os) const;
    /// rate, C, r2, window, lambda0 (null when a fit failed, with the reason).
    nlohmann::json summary() const;
};

/// Against a fixed measure (n_ref = 0) or an empirical one of n_ref samples.
/// `reference_error` (a TV bound on the reference itself) is added to the
/// noise floor. Only reliable instants (>= 50 survivors) enter the curve.
ConvergenceReport convergence_to_measure(const ConditionedLaws<DiscreteState>& laws,
                                         const EmpiricalMeasure<DiscreteState>& reference, std::size_t n_ref,
                                         std::string label, double reference_error = 0.0);

/// Against the conditional law evolved from another initial law on the same grid.
ConvergenceReport convergence_between(const ConditionedLaws<DiscreteState>& laws,
                                      const ConditionedLaws<DiscreteState>& reference, std::string label);

/// Continuous laws mapped onto histogram cells, so the discrete reports apply.
ConditionedLaws<DiscreteState> bin_laws(const ConditionedLaws<ContinuousState>& laws, const BinGrid& grid);

} // namespace qsdlab::qsd
