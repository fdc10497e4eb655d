#pragma once

#include "qsdlab/core/batch.hpp"
#include "qsdlab/core/rng.hpp"
#include "qsdlab/core/state.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qsdlab::feller {

/// r_i(x) = r_i - sum_j c_ij x_j (competitive Lotka-Volterra), or with a
/// competition threshold K: r_i(x) = r_i - sum_j c_ij (x_j - K)^+.
struct FellerLV {
    std::vector<double> r;
    std::vector<std::vector<double>> c;
    double threshold = 0.0;

    void validate(std::size_t d) const;
};

/// dX^i = sqrt(gamma_i X^i) dB^i + X^i r_i(X) dt, absorbed when a coordinate hits 0.
class FellerModel {
public:
    using GrowthFn = std::function<void(std::span<const double> x, std::span<double> r)>;

    static FellerModel lotka_volterra(std::vector<double> gamma, FellerLV lv);
    static FellerModel from_function(std::vector<double> gamma, GrowthFn fn, std::string name);

    std::size_t dimension() const noexcept { return gamma_.size(); }
    const std::vector<double>& gamma() const noexcept { return gamma_; }
    const std::string& name() const noexcept { return name_; }
    const FellerLV* lv() const noexcept { return lv_.get(); }

    /// Per-capita growth rates r(x).
    void growth(std::span<const double> x, std::span<double> r) const;

    /// The same process in coordinates y_i = 2 x_i / gamma_i, where every
    /// diffusion coefficient equals 2. LV parameters map to c~_ij = c_ij gamma_j / 2.
    FellerModel rescaled() const;
    ContinuousState to_rescaled(const ContinuousState& x) const;
    ContinuousState from_rescaled(const ContinuousState& y) const;

    nlohmann::json to_json() const;

private:
    FellerModel() = default;

    std::vector<double> gamma_;
    std::string name_;
    std::shared_ptr<const FellerLV> lv_;
    GrowthFn fn_;
};

/// Lf(x) = sum_i x_i r_i(x) df/dx_i + sum_i (gamma_i x_i / 2) d2f/dx_i^2, from the
/// gradient and the diagonal of the Hessian at an interior x.
double feller_generator_apply(const FellerModel& model, const ContinuousState& x, std::span<const double> grad,
                              std::span<const double> hess_diag);

struct FellerScheme {
    double dt = 1e-3;
    double eps_abs = 1e-10;
    bool refine_near_boundary = true;  // halve dt while min_i x_i < 10 dt

    void validate() const;
    double step_for(const ContinuousState& x) const;
    nlohmann::json to_json() const;
};

/// One full-truncation Euler-Maruyama step with the given standard normals:
///   x_i' = x_i + x_i^+ r_i(x^+) dt + sqrt(gamma_i x_i^+ dt) xi_i,
/// coordinates landing at or below eps_abs become exactly 0.
void feller_step_with_noise(const FellerModel& model, ContinuousState& x, double dt, std::span<const double> xi,
                            double eps_abs, std::span<double> scratch);

/// Same step drawing the normals from `rng`.
ContinuousState simulate_feller_step(const FellerModel& model, const ContinuousState& x, double dt, RngStream& rng,
                                     double eps_abs = 1e-10);

class FellerSimulator {
public:
    using State = ContinuousState;

    FellerSimulator(const FellerModel& model, FellerScheme scheme);

    std::size_t dimension() const noexcept { return model_->dimension(); }
    const FellerModel& model() const noexcept { return *model_; }
    const FellerScheme& scheme() const noexcept { return scheme_; }

    /// Steps until absorption or the horizon; `max_events` bounds the step count.
    Trajectory<ContinuousState> simulate(const ContinuousState& x0, const SimBatchConfig& cfg, RngStream& rng) const;

    /// Advances x in place over a time span of `duration`, stopping early on
    /// absorption; returns the time actually elapsed.
    double advance(ContinuousState& x, double duration, RngStream& rng) const;

private:
    const FellerModel* model_;
    FellerScheme scheme_;
};

/// Paths of X and of the comparison diffusions sharing X's Brownian increments,
/// in rescaled coordinates (all diffusion coefficients 2):
///   upper:    dX^ = sqrt(2 X^) dB + a^eta X^ dt,
///   logistic: dX- = sqrt(2 X-) dB + X- (a^eta - X-^eta) dt.
/// Coordinates that reach 0 stay at 0 while the others keep moving.
struct ComparisonReport {
    std::uint64_t paths = 0;
    std::uint64_t steps_checked = 0;
    std::uint64_t upper_violations = 0;
    std::uint64_t logistic_violations = 0;
    double worst_upper_excess = 0.0;     // max of X - X^ over all checks
    double worst_logistic_excess = 0.0;  // max of X - X-
};

ComparisonReport compare_with_upper_diffusions(const FellerModel& model, double a, double eta,
                                               const ContinuousState& x0, double horizon, const FellerScheme& scheme,
                                               std::size_t n_paths, const RngStream& rng,
                                               ExecPolicy policy = ExecPolicy::parallel);

} // namespace qsdlab::feller
