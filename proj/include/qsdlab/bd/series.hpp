#pragma once

#include "qsdlab/bd/model.hpp"
#include "qsdlab/core/state.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace qsdlab::bd {

struct BDLyapunovParams {
    double alpha = 2.0;
    double beta = 2.0;
    double epsilon = 0.5;
    double eta = 0.5;

    void validate() const;
    nlohmann::json to_json() const;
};

/// sum_{k >= n0} k^{-s} for s > 1, n0 >= 1. Terms below a cutoff are summed
/// directly; the rest uses Euler-Maclaurin with two derivative corrections.
/// The certified remainder is at most 1e-13 relative to the result and is
/// written to *remainder_bound when given.
double zeta_tail(double s, Count n0, double* remainder_bound = nullptr);

/// sum_{k=1}^m k^{-s}.
double partial_zeta(double s, Count m);

/// V(m) = sum_{k<=m} k^{-alpha} and phi(m) = sum_{k>m} k^{-beta} as functions
/// of m = |n|, tabulated for m <= k_max + 1 and computed on demand beyond.
class SeriesTable {
public:
    SeriesTable(const BDLyapunovParams& params, Count k_max);

    const BDLyapunovParams& params() const noexcept { return p_; }
    Count k_max() const noexcept { return k_max_; }
    double V(Count m) const;
    double phi(Count m) const;

private:
    BDLyapunovParams p_;
    Count k_max_;
    std::vector<double> v_;
    std::vector<double> phi_;
};

/// V(n) = sum_{k=1}^{|n|} k^{-alpha}, phi(n) = sum_{k>|n|} k^{-beta}; both 0 on absorbed states.
double lyapunov_V(const BDLyapunovParams& params, const DiscreteState& n);
double lyapunov_phi(const BDLyapunovParams& params, const DiscreteState& n);

/// Exact generator images of V and phi at a non-absorbed n, using that both
/// depend on |n| only and vanish when a coordinate drops from 1 to 0:
///   LV(n)   = sum_j n_j b_j (|n|+1)^{-alpha} - sum_{n_j != 1} n_j d_j |n|^{-alpha} - sum_{n_j = 1} d_j V(|n|)
///   Lphi(n) = -sum_j n_j b_j (|n|+1)^{-beta} + sum_{n_j != 1} n_j d_j |n|^{-beta} - sum_{n_j = 1} d_j phi(|n|)
struct GeneratorImages {
    double LV;
    double Lphi;
};

class SeriesGenerator {
public:
    SeriesGenerator(const BDModel& model, const SeriesTable& table);
    GeneratorImages operator()(const DiscreteState& n);

private:
    const BDModel* model_;
    const SeriesTable* table_;
    RateScratch scratch_;
};

} // namespace qsdlab::bd
