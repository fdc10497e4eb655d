#pragma once

#include "qsdlab/bd/model.hpp"
#include "qsdlab/core/parallel.hpp"

#include <optional>
#include <span>
#include <vector>

namespace qsdlab::bd {

/// The process killed on leaving the box {1 <= n_i <= box_i}: a finite
/// sub-Markovian generator Q~ on the box states (row-major, last axis
/// fastest). Transitions to absorbed states or out of the box are lost mass.
class Truncation {
public:
    Truncation(const BDModel& model, std::vector<Count> box);

    std::size_t size() const noexcept { return states_.size(); }
    std::size_t dimension() const noexcept { return box_.size(); }
    const std::vector<Count>& box() const noexcept { return box_; }
    const DiscreteState& state(std::size_t i) const { return states_[i]; }
    const std::vector<DiscreteState>& states() const noexcept { return states_; }
    std::optional<std::size_t> index_of(const DiscreteState& n) const;

    /// q_n for each box state (total jump rate, including killed transitions).
    const std::vector<double>& total_rates() const noexcept { return q_; }
    /// Rate of leaving the box or hitting the boundary, per state.
    const std::vector<double>& kill_rates() const noexcept { return kill_; }
    double max_rate() const noexcept { return max_q_; }

    /// out = Q~ f (column action) and out = p Q~ (row action).
    void apply_right(std::span<const double> f, std::span<double> out, ExecPolicy policy = ExecPolicy::parallel) const;
    void apply_left(std::span<const double> p, std::span<double> out, ExecPolicy policy = ExecPolicy::parallel) const;

    /// p e^{t Q~} and e^{t Q~} f by uniformization. Throws NumericalError when
    /// max_rate * t exceeds the uniformization budget.
    std::vector<double> propagate_left(std::span<const double> p, double t,
                                       ExecPolicy policy = ExecPolicy::parallel) const;
    std::vector<double> propagate_right(std::span<const double> f, double t,
                                        ExecPolicy policy = ExecPolicy::parallel) const;

    /// E_n[tau] for the killed chain: solves (-Q~) x = 1 with a sparse LU.
    std::vector<double> mean_absorption_times() const;

    /// Throws PreconditionError naming a state that cannot reach (1,...,1)
    /// or cannot be reached from it within the box.
    void check_irreducible() const;

    template <class F>
    std::vector<double> evaluate(F&& f) const {
        std::vector<double> out(states_.size());
        for (std::size_t i = 0; i < states_.size(); ++i) out[i] = f(states_[i]);
        return out;
    }

    /// Largest max_rate * t accepted by the propagators.
    static constexpr double kUniformizationBudget = 1e7;

private:
    std::vector<Count> box_;
    std::vector<Count> strides_;
    std::vector<DiscreteState> states_;
    std::vector<double> q_;
    std::vector<double> kill_;
    double max_q_ = 0.0;
    // Off-diagonal entries in CSR form, rows and transposed rows.
    std::vector<std::size_t> row_ptr_, col_;
    std::vector<double> val_;
    std::vector<std::size_t> trow_ptr_, tcol_;
    std::vector<double> tval_;

    std::vector<double> propagate(std::span<const double> v, double t, bool left, ExecPolicy policy) const;
};

} // namespace qsdlab::bd
