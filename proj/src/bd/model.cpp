#include "qsdlab/bd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qsdlab::bd {

void LVParams::validate() const {
    const std::size_t d = lambda.size();
    require(d >= 2, "LV parameters: dimension must be at least 2");
    require(mu.size() == d && gamma.size() == d && c.size() == d, "LV parameters: inconsistent dimensions");
    for (std::size_t i = 0; i < d; ++i) {
        require(lambda[i] >= 0.0 && mu[i] >= 0.0, "LV parameters: lambda and mu must be nonnegative");
        require(gamma[i].size() == d && c[i].size() == d, "LV parameters: gamma and c must be d x d");
        for (std::size_t j = 0; j < d; ++j) {
            require(gamma[i][j] >= 0.0 && c[i][j] >= 0.0, "LV parameters: gamma and c must be nonnegative");
        }
    }
}

void TabulatedRates::validate() const {
    const std::size_t d = box.size();
    require(d >= 2, "tabulated rates: dimension must be at least 2");
    std::size_t states = 1;
    for (Count b : box) {
        require(b >= 1, "tabulated rates: box extents must be >= 1");
        states *= static_cast<std::size_t>(b);
    }
    require(birth.size() == states * d && death.size() == states * d,
            "tabulated rates: expected prod(box) * d values for birth and death");
    for (double v : birth) require(v >= 0.0 && std::isfinite(v), "tabulated rates: birth rates must be finite >= 0");
    for (double v : death) require(v >= 0.0 && std::isfinite(v), "tabulated rates: death rates must be finite >= 0");
    require(outside == "clamp" || outside == "zero", "tabulated rates: outside rule must be 'clamp' or 'zero'");
}

BDModel BDModel::lotka_volterra(LVParams params) {
    params.validate();
    BDModel m;
    m.d_ = params.dimension();
    m.name_ = "lotka_volterra";
    m.lv_ = std::make_shared<const LVParams>(std::move(params));
    return m;
}

BDModel BDModel::from_function(std::size_t d, RateFn fn, std::string name) {
    require(d >= 2, "BDModel: dimension must be at least 2");
    require(static_cast<bool>(fn), "BDModel: empty rate function");
    BDModel m;
    m.d_ = d;
    m.name_ = std::move(name);
    m.fn_ = std::move(fn);
    return m;
}

BDModel BDModel::tabulated(TabulatedRates table) {
    table.validate();
    BDModel m;
    m.d_ = table.box.size();
    m.name_ = "tabulated";
    m.table_ = std::make_shared<const TabulatedRates>(std::move(table));
    return m;
}

void BDModel::rates(std::span<const Count> n, std::span<double> birth, std::span<double> death) const {
    const std::size_t d = d_;
    if (lv_) {
        const LVParams& p = *lv_;
        for (std::size_t i = 0; i < d; ++i) {
            double b = p.lambda[i];
            double dd = p.mu[i];
            const auto& gi = p.gamma[i];
            const auto& ci = p.c[i];
            for (std::size_t j = 0; j < d; ++j) {
                const double nj = static_cast<double>(n[j]);
                b += gi[j] * nj;
                dd += ci[j] * nj;
            }
            birth[i] = b;
            death[i] = dd;
        }
        return;
    }
    if (table_) {
        const TabulatedRates& t = *table_;
        std::size_t idx = 0;
        bool inside = true;
        for (std::size_t i = 0; i < d; ++i) {
            Count v = n[i];
            if (v > t.box[i] || v < 1) inside = false;
            v = std::clamp<Count>(v, 1, t.box[i]);
            idx = idx * static_cast<std::size_t>(t.box[i]) + static_cast<std::size_t>(v - 1);
        }
        if (!inside && t.outside == "zero") {
            std::fill(birth.begin(), birth.end(), 0.0);
            std::fill(death.begin(), death.end(), 0.0);
            return;
        }
        for (std::size_t i = 0; i < d; ++i) {
            birth[i] = t.birth[idx * d + i];
            death[i] = t.death[idx * d + i];
        }
        return;
    }
    fn_(n, birth, death);
}

double BDModel::total_rate(const DiscreteState& n) const {
    RateScratch s(d_);
    rates(n.view(), s.birth, s.death);
    double q = 0.0;
    for (std::size_t j = 0; j < d_; ++j) q += static_cast<double>(n[j]) * (s.birth[j] + s.death[j]);
    return q;
}

double gillespie_advance(const BDModel& model, DiscreteState& state, RngStream& rng, RateScratch& scratch) {
    const std::size_t d = model.dimension();
    model.rates(state.view(), scratch.birth, scratch.death);
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double nj = static_cast<double>(state[j]);
        scratch.birth[j] *= nj;
        scratch.death[j] *= nj;
        q += scratch.birth[j] + scratch.death[j];
    }
    if (!(q > 0.0)) return std::numeric_limits<double>::infinity();
    const double h = rng.exponential(q);
    double u = rng.uniform() * q;
    for (std::size_t j = 0; j < d; ++j) {
        if (u < scratch.birth[j]) {
            ++state[j];
            return h;
        }
        u -= scratch.birth[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
        if (u < scratch.death[j]) {
            --state[j];
            return h;
        }
        u -= scratch.death[j];
    }
    // Rounding left u at the top of the range: take the last event with positive rate.
    for (std::size_t j = d; j-- > 0;) {
        if (scratch.death[j] > 0.0) {
            --state[j];
            return h;
        }
    }
    for (std::size_t j = d; j-- > 0;) {
        if (scratch.birth[j] > 0.0) {
            ++state[j];
            return h;
        }
    }
    return h;
}

Jump gillespie_step(const BDModel& model, const DiscreteState& state, RngStream& rng) {
    require(state.dimension() == model.dimension(), "gillespie_step: dimension mismatch");
    if (state.absorbed()) throw PreconditionError("gillespie_step: state " + to_string(state) + " is absorbed");
    RateScratch scratch(model.dimension());
    DiscreteState next = state;
    const double h = gillespie_advance(model, next, rng, scratch);
    return {h, std::move(next)};
}

double BDSimulator::advance(DiscreteState& x, double duration, RngStream& rng) const {
    RateScratch scratch(model_->dimension());
    double t = 0.0;
    while (!x.absorbed()) {
        DiscreteState before = x;
        const double h = gillespie_advance(*model_, x, rng, scratch);
        if (t + h > duration) {
            x = std::move(before);
            return duration;
        }
        t += h;
    }
    return t;
}

Trajectory<DiscreteState> BDSimulator::simulate(const DiscreteState& x0, const SimBatchConfig& cfg,
                                                RngStream& rng) const {
    const BDModel& m = *model_;
    const TimeGrid& grid = cfg.record_grid;
    const std::size_t n_rec = grid.size();
    Trajectory<DiscreteState> tr;
    tr.states.reserve(n_rec);
    RateScratch scratch(m.dimension());
    DiscreteState x = x0;
    double t = 0.0;
    std::size_t g = 0;
    while (true) {
        if (x.absorbed()) {
            while (g < n_rec) {
                tr.states.push_back(x);
                ++g;
            }
            tr.status = TrajectoryStatus::absorbed;
            break;
        }
        DiscreteState before = x;
        const double h = gillespie_advance(m, x, rng, scratch);
        const double t_next = t + h;
        while (g < n_rec && grid.at(g) < t_next) {
            tr.states.push_back(before);
            ++g;
        }
        if (t_next > cfg.horizon) {
            x = before;
            tr.status = TrajectoryStatus::censored;
            break;
        }
        t = t_next;
        ++tr.events;
        if (x.absorbed()) {
            tr.absorption_time = t;
            continue;
        }
        if (tr.events >= cfg.max_events) {
            tr.status = TrajectoryStatus::guard_tripped;
            break;
        }
    }
    return tr;
}

} // namespace qsdlab::bd
