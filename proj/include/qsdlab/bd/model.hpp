#pragma once

#include "qsdlab/core/batch.hpp"
#include "qsdlab/core/rng.hpp"
#include "qsdlab/core/state.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qsdlab::bd {

/// Lotka-Volterra parameterization: per-capita rates
///   b_i(n) = lambda_i + sum_j gamma_ij n_j,   d_i(n) = mu_i + sum_j c_ij n_j.
struct LVParams {
    std::vector<double> lambda;
    std::vector<double> mu;
    std::vector<std::vector<double>> gamma;
    std::vector<std::vector<double>> c;

    std::size_t dimension() const noexcept { return lambda.size(); }
    void validate() const;
};

/// Rates tabulated on the box [1, box_0] x ... x [1, box_{d-1}] (row-major,
/// last axis fastest), `d` per-capita values per state. Outside the box the
/// rule named by `outside` applies: "clamp" reuses the nearest in-box state,
/// "zero" freezes the dynamics.
struct TabulatedRates {
    std::vector<Count> box;
    std::vector<double> birth;
    std::vector<double> death;
    std::string outside = "clamp";

    void validate() const;
};

/// Multitype birth-death process on Z_+^d: from n, jump to n + e_j at rate
/// n_j b_j(n) and to n - e_j at rate n_j d_j(n). Immutable after construction.
class BDModel {
public:
    using RateFn = std::function<void(std::span<const Count> n, std::span<double> birth, std::span<double> death)>;

    static BDModel lotka_volterra(LVParams params);
    static BDModel from_function(std::size_t d, RateFn fn, std::string name);
    static BDModel tabulated(TabulatedRates table);

    std::size_t dimension() const noexcept { return d_; }
    const std::string& name() const noexcept { return name_; }
    const LVParams* lv() const noexcept { return lv_.get(); }

    /// Per-capita birth and death rates at n (spans of length d).
    void rates(std::span<const Count> n, std::span<double> birth, std::span<double> death) const;

    /// q_n = sum_j n_j (b_j(n) + d_j(n)).
    double total_rate(const DiscreteState& n) const;

private:
    BDModel() = default;

    std::size_t d_ = 0;
    std::string name_;
    std::shared_ptr<const LVParams> lv_;
    std::shared_ptr<const TabulatedRates> table_;
    RateFn fn_;
};

struct Jump {
    double holding_time;
    DiscreteState next;
};

/// One Gillespie event from a non-absorbed state. If every rate vanishes the
/// holding time is +inf and the state is returned unchanged.
Jump gillespie_step(const BDModel& model, const DiscreteState& state, RngStream& rng);

/// Scratch buffers so the hot loop does not allocate.
struct RateScratch {
    std::vector<double> birth;
    std::vector<double> death;
    explicit RateScratch(std::size_t d) : birth(d), death(d) {}
};

/// In-place Gillespie event; returns the holding time (inf when frozen).
double gillespie_advance(const BDModel& model, DiscreteState& state, RngStream& rng, RateScratch& scratch);

/// Lf(n) = sum_j [f(n+e_j) - f(n)] n_j b_j(n) + sum_j [f(n-e_j) - f(n)] n_j d_j(n).
/// f is evaluated on neighbours, which may be absorbed.
template <class F>
double generator_apply(const BDModel& model, F&& f, const DiscreteState& n) {
    if (n.absorbed()) throw PreconditionError("generator_apply: state " + to_string(n) + " is absorbed");
    const std::size_t d = model.dimension();
    require(n.dimension() == d, "generator_apply: dimension mismatch");
    RateScratch s(d);
    model.rates(n.view(), s.birth, s.death);
    const double f0 = f(n);
    double out = 0.0;
    DiscreteState m = n;
    for (std::size_t j = 0; j < d; ++j) {
        const double up = static_cast<double>(n[j]) * s.birth[j];
        const double down = static_cast<double>(n[j]) * s.death[j];
        if (up != 0.0) {
            m[j] = n[j] + 1;
            out += (f(m) - f0) * up;
        }
        if (down != 0.0) {
            m[j] = n[j] - 1;
            out += (f(m) - f0) * down;
        }
        m[j] = n[j];
    }
    return out;
}

/// Path simulator for batch drivers.
class BDSimulator {
public:
    using State = DiscreteState;

    explicit BDSimulator(const BDModel& model) : model_(&model) {}

    std::size_t dimension() const noexcept { return model_->dimension(); }
    const BDModel& model() const noexcept { return *model_; }

    Trajectory<DiscreteState> simulate(const DiscreteState& x0, const SimBatchConfig& cfg, RngStream& rng) const;

    /// Advances x in place over a time span of `duration`, stopping at
    /// absorption; returns the time actually elapsed.
    double advance(DiscreteState& x, double duration, RngStream& rng) const;

private:
    const BDModel* model_;
};

} // namespace qsdlab::bd
