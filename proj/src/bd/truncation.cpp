#include "qsdlab/bd/truncation.hpp"

#include "qsdlab/core/error.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <deque>
#include <string>

namespace qsdlab::bd {

Truncation::Truncation(const BDModel& model, std::vector<Count> box) : box_(std::move(box)) {
    const std::size_t d = model.dimension();
    require(box_.size() == d, "Truncation: box dimension does not match the model");
    std::size_t n = 1;
    for (Count b : box_) {
        require(b >= 1, "Truncation: box extents must be >= 1");
        n *= static_cast<std::size_t>(b);
    }
    require(n <= 50'000'000, "Truncation: box too large");
    strides_.assign(d, 1);
    for (std::size_t i = d - 1; i-- > 0;) strides_[i] = strides_[i + 1] * box_[i + 1];

    states_.reserve(n);
    DiscreteState s(std::vector<Count>(d, 1));
    for (std::size_t idx = 0; idx < n; ++idx) {
        states_.push_back(s);
        for (std::size_t i = d; i-- > 0;) {
            if (++s[i] <= box_[i]) break;
            s[i] = 1;
        }
    }

    q_.assign(n, 0.0);
    kill_.assign(n, 0.0);
    row_ptr_.assign(n + 1, 0);
    RateScratch scratch(d);
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
    for (std::size_t idx = 0; idx < n; ++idx) {
        const DiscreteState& x = states_[idx];
        model.rates(x.view(), scratch.birth, scratch.death);
        for (std::size_t j = 0; j < d; ++j) {
            const double nj = static_cast<double>(x[j]);
            const double up = nj * scratch.birth[j];
            const double down = nj * scratch.death[j];
            q_[idx] += up + down;
            if (up > 0.0) {
                if (x[j] < box_[j]) {
                    rows[idx].emplace_back(idx + static_cast<std::size_t>(strides_[j]), up);
                } else {
                    kill_[idx] += up;
                }
            }
            if (down > 0.0) {
                if (x[j] > 1) {
                    rows[idx].emplace_back(idx - static_cast<std::size_t>(strides_[j]), down);
                } else {
                    kill_[idx] += down;
                }
            }
        }
        max_q_ = std::max(max_q_, q_[idx]);
    }
    for (std::size_t i = 0; i < n; ++i) row_ptr_[i + 1] = row_ptr_[i] + rows[i].size();
    col_.resize(row_ptr_[n]);
    val_.resize(row_ptr_[n]);
    std::vector<std::size_t> tcount(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = row_ptr_[i];
        for (const auto& [c, v] : rows[i]) {
            col_[k] = c;
            val_[k] = v;
            ++k;
            ++tcount[c + 1];
        }
    }
    trow_ptr_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) trow_ptr_[i + 1] = trow_ptr_[i] + tcount[i + 1];
    tcol_.resize(col_.size());
    tval_.resize(col_.size());
    std::vector<std::size_t> fill(trow_ptr_.begin(), trow_ptr_.end() - 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
            const std::size_t pos = fill[col_[k]]++;
            tcol_[pos] = i;
            tval_[pos] = val_[k];
        }
    }
}

std::optional<std::size_t> Truncation::index_of(const DiscreteState& n) const {
    if (n.dimension() != box_.size()) return std::nullopt;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < box_.size(); ++i) {
        if (n[i] < 1 || n[i] > box_[i]) return std::nullopt;
        idx += static_cast<std::size_t>((n[i] - 1) * strides_[i]);
    }
    return idx;
}

void Truncation::apply_right(std::span<const double> f, std::span<double> out, ExecPolicy policy) const {
    require(f.size() == size() && out.size() == size(), "Truncation::apply_right: size mismatch");
    parallel_for_static(policy, static_cast<std::int64_t>(size()), [&](std::int64_t ii) {
        const auto i = static_cast<std::size_t>(ii);
        double acc = -q_[i] * f[i];
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += val_[k] * f[col_[k]];
        out[i] = acc;
    });
}

void Truncation::apply_left(std::span<const double> p, std::span<double> out, ExecPolicy policy) const {
    require(p.size() == size() && out.size() == size(), "Truncation::apply_left: size mismatch");
    parallel_for_static(policy, static_cast<std::int64_t>(size()), [&](std::int64_t jj) {
        const auto j = static_cast<std::size_t>(jj);
        double acc = -q_[j] * p[j];
        for (std::size_t k = trow_ptr_[j]; k < trow_ptr_[j + 1]; ++k) acc += tval_[k] * p[tcol_[k]];
        out[j] = acc;
    });
}

std::vector<double> Truncation::propagate(std::span<const double> v, double t, bool left, ExecPolicy policy) const {
    require(v.size() == size(), "Truncation::propagate: size mismatch");
    require(t >= 0.0 && std::isfinite(t), "Truncation::propagate: time must be finite and >= 0");
    std::vector<double> cur(v.begin(), v.end());
    if (t == 0.0 || max_q_ == 0.0) return cur;
    const double rate = max_q_;
    if (rate * t > kUniformizationBudget) {
        throw NumericalError("uniformization rate bound exceeded: max rate " + std::to_string(rate) + " times t " +
                             std::to_string(t) + " is over " + std::to_string(kUniformizationBudget));
    }
    // Split into substeps with rate*s <= 32 so the Poisson weights stay well
    // inside double range; each substep is a truncated Poisson series in
    // P = I + Q~/rate, stopped once the remaining weight is below 1e-17.
    const auto n_sub = static_cast<std::size_t>(std::ceil(rate * t / 32.0));
    const double s = t / static_cast<double>(n_sub);
    const double mean = rate * s;
    std::vector<double> term(size()), next(size()), acc(size());
    for (std::size_t sub = 0; sub < n_sub; ++sub) {
        term = cur;
        double w = std::exp(-mean);
        double cum = w;
        for (std::size_t i = 0; i < size(); ++i) acc[i] = w * term[i];
        for (std::size_t k = 1; 1.0 - cum > 1e-17 && k < 100000; ++k) {
            if (left) {
                apply_left(term, next, policy);
            } else {
                apply_right(term, next, policy);
            }
            for (std::size_t i = 0; i < size(); ++i) term[i] += next[i] / rate;
            w *= mean / static_cast<double>(k);
            cum += w;
            for (std::size_t i = 0; i < size(); ++i) acc[i] += w * term[i];
            if (static_cast<double>(k) > mean && w < 1e-18) break;
        }
        cur.swap(acc);
    }
    return cur;
}

std::vector<double> Truncation::propagate_left(std::span<const double> p, double t, ExecPolicy policy) const {
    return propagate(p, t, true, policy);
}

std::vector<double> Truncation::propagate_right(std::span<const double> f, double t, ExecPolicy policy) const {
    return propagate(f, t, false, policy);
}

std::vector<double> Truncation::mean_absorption_times() const {
    const auto n = static_cast<Eigen::Index>(size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(size() + val_.size());
    for (std::size_t i = 0; i < size(); ++i) {
        trip.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), q_[i]);
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
            trip.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col_[k]), -val_[k]);
        }
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw NumericalError("mean_absorption_times: factorization failed (chain may never be killed)");
    const Eigen::VectorXd x = lu.solve(Eigen::VectorXd::Ones(n));
    if (lu.info() != Eigen::Success) throw NumericalError("mean_absorption_times: solve failed");
    return std::vector<double>(x.data(), x.data() + n);
}

void Truncation::check_irreducible() const {
    const std::size_t n = size();
    auto reach = [&](const std::vector<std::size_t>& ptr, const std::vector<std::size_t>& col) {
        std::vector<char> seen(n, 0);
        std::deque<std::size_t> queue{0};
        seen[0] = 1;
        while (!queue.empty()) {
            const std::size_t i = queue.front();
            queue.pop_front();
            for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) {
                if (!seen[col[k]]) {
                    seen[col[k]] = 1;
                    queue.push_back(col[k]);
                }
            }
        }
        return seen;
    };
    const auto fwd = reach(row_ptr_, col_);
    const auto bwd = reach(trow_ptr_, tcol_);
    for (std::size_t i = 0; i < n; ++i) {
        if (!fwd[i]) throw PreconditionError("truncation is not irreducible: " + to_string(states_[i]) +
                                             " is unreachable from " + to_string(states_[0]));
        if (!bwd[i]) throw PreconditionError("truncation is not irreducible: " + to_string(states_[0]) +
                                             " is unreachable from " + to_string(states_[i]));
    }
}

} // namespace qsdlab::bd
