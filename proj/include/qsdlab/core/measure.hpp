#pragma once

#include "qsdlab/core/error.hpp"
#include "qsdlab/core/rng.hpp"
#include "qsdlab/core/state.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace qsdlab {

/// Weighted point masses. Atoms may repeat until `compacted()` is called.
template <class State>
class EmpiricalMeasure {
public:
    struct Atom {
        State state;
        double weight;
    };

    EmpiricalMeasure() = default;

    static EmpiricalMeasure dirac(State s) {
        EmpiricalMeasure m;
        m.add(std::move(s), 1.0);
        return m;
    }

    void add(State s, double weight) {
        require(weight >= 0.0 && std::isfinite(weight), "EmpiricalMeasure: weight must be finite and nonnegative");
        total_mass_ += weight;
        atoms_.push_back({std::move(s), weight});
    }

    void reserve(std::size_t n) { atoms_.reserve(n); }

    const std::vector<Atom>& atoms() const noexcept { return atoms_; }
    std::size_t size() const noexcept { return atoms_.size(); }
    bool empty() const noexcept { return atoms_.empty(); }
    double total_mass() const noexcept { return total_mass_; }

    bool is_normalized(double tol = 1e-12) const noexcept {
        double s = 0.0;
        for (const auto& a : atoms_) s += a.weight;
        return std::abs(s - 1.0) <= tol;
    }

    EmpiricalMeasure normalized() const {
        if (!(total_mass_ > 0.0)) throw PreconditionError("EmpiricalMeasure: cannot normalize a zero measure");
        EmpiricalMeasure out;
        out.atoms_.reserve(atoms_.size());
        double s = 0.0;
        for (const auto& a : atoms_) s += a.weight;
        for (const auto& a : atoms_) out.atoms_.push_back({a.state, a.weight / s});
        out.total_mass_ = 1.0;
        return out;
    }

    /// Sorted by state with duplicates merged; zero-weight atoms dropped.
    EmpiricalMeasure compacted() const {
        std::vector<Atom> sorted = atoms_;
        std::sort(sorted.begin(), sorted.end(), [](const Atom& x, const Atom& y) { return x.state < y.state; });
        EmpiricalMeasure out;
        for (auto& a : sorted) {
            if (!out.atoms_.empty() && out.atoms_.back().state == a.state) {
                out.atoms_.back().weight += a.weight;
            } else {
                out.atoms_.push_back(std::move(a));
            }
        }
        std::erase_if(out.atoms_, [](const Atom& a) { return a.weight == 0.0; });
        out.total_mass_ = 0.0;
        for (const auto& a : out.atoms_) out.total_mass_ += a.weight;
        return out;
    }

    template <class F>
    double integrate(F&& f) const {
        double s = 0.0;
        for (const auto& a : atoms_) s += a.weight * f(a.state);
        return s;
    }

private:
    std::vector<Atom> atoms_;
    double total_mass_ = 0.0;
};

/// Inverse-CDF sampler over the atoms of a measure.
template <class State>
class MeasureSampler {
public:
    explicit MeasureSampler(const EmpiricalMeasure<State>& m) : measure_(&m) {
        require(!m.empty() && m.total_mass() > 0.0, "MeasureSampler: empty measure");
        cumulative_.reserve(m.size());
        double s = 0.0;
        for (const auto& a : m.atoms()) cumulative_.push_back(s += a.weight);
    }

    const State& draw(RngStream& rng) const {
        const double u = rng.uniform() * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) --it;
        return measure_->atoms()[static_cast<std::size_t>(it - cumulative_.begin())].state;
    }

private:
    const EmpiricalMeasure<State>* measure_;
    std::vector<double> cumulative_;
};

/// Total variation distance with the sup convention
/// sup_{|f| <= 1} |mu(f) - nu(f)| = sum_s |mu{s} - nu{s}|, range [0, 2].
/// Both inputs must be normalized.
double tv_distance(const EmpiricalMeasure<DiscreteState>& mu, const EmpiricalMeasure<DiscreteState>& nu);

/// Rectangular histogram grid used to compare continuous-state measures.
struct BinGrid {
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<int> bins;

    std::size_t dimension() const noexcept { return bins.size(); }

    /// Per-axis cell index; points outside the box are clamped to the edge cells.
    DiscreteState cell(const ContinuousState& x) const;

    /// Box spanning the pooled weighted [q_lo, q_hi] quantiles of the inputs
    /// (each input contributes its normalized mass).
    static BinGrid from_quantiles(const std::vector<const EmpiricalMeasure<ContinuousState>*>& samples,
                                  int bins_per_axis = 40, double q_lo = 1e-3, double q_hi = 1.0 - 1e-3);

    bool operator==(const BinGrid&) const = default;
};

struct BinnedMeasure {
    BinGrid grid;
    EmpiricalMeasure<DiscreteState> cells;  // normalized, compacted
};

BinnedMeasure bin(const EmpiricalMeasure<ContinuousState>& m, const BinGrid& grid);

/// TV between binned measures; throws if the binning grids differ.
double tv_distance(const BinnedMeasure& mu, const BinnedMeasure& nu);

} // namespace qsdlab
