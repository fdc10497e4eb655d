#include "qsdlab/feller/model.hpp"

#include "qsdlab/core/error.hpp"
#include "qsdlab/core/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace qsdlab::feller {

void FellerLV::validate(std::size_t d) const {
    require(r.size() == d, "Feller LV: r must have one entry per coordinate");
    require(c.size() == d, "Feller LV: c must be d x d");
    for (std::size_t i = 0; i < d; ++i) {
        require(c[i].size() == d, "Feller LV: c must be d x d");
        require(std::isfinite(r[i]), "Feller LV: r must be finite");
        for (std::size_t j = 0; j < d; ++j) require(c[i][j] >= 0.0, "Feller LV: c must be nonnegative");
        require(c[i][i] > 0.0, "Feller LV: diagonal competition c_ii must be positive");
    }
    require(threshold >= 0.0, "Feller LV: threshold must be >= 0");
}

FellerModel FellerModel::lotka_volterra(std::vector<double> gamma, FellerLV lv) {
    require(gamma.size() >= 2, "FellerModel: dimension must be at least 2");
    for (double g : gamma) require(g > 0.0 && std::isfinite(g), "FellerModel: gamma must be positive");
    lv.validate(gamma.size());
    FellerModel m;
    m.gamma_ = std::move(gamma);
    m.name_ = lv.threshold > 0.0 ? "lotka_volterra_threshold" : "lotka_volterra";
    m.lv_ = std::make_shared<const FellerLV>(std::move(lv));
    return m;
}

FellerModel FellerModel::from_function(std::vector<double> gamma, GrowthFn fn, std::string name) {
    require(gamma.size() >= 2, "FellerModel: dimension must be at least 2");
    for (double g : gamma) require(g > 0.0 && std::isfinite(g), "FellerModel: gamma must be positive");
    require(static_cast<bool>(fn), "FellerModel: empty growth function");
    FellerModel m;
    m.gamma_ = std::move(gamma);
    m.name_ = std::move(name);
    m.fn_ = std::move(fn);
    return m;
}

void FellerModel::growth(std::span<const double> x, std::span<double> r) const {
    if (lv_) {
        const FellerLV& p = *lv_;
        const std::size_t d = gamma_.size();
        for (std::size_t i = 0; i < d; ++i) {
            double v = p.r[i];
            for (std::size_t j = 0; j < d; ++j) {
                const double xj = p.threshold > 0.0 ? std::max(x[j] - p.threshold, 0.0) : x[j];
                v -= p.c[i][j] * xj;
            }
            r[i] = v;
        }
        return;
    }
    fn_(x, r);
}

FellerModel FellerModel::rescaled() const {
    const std::size_t d = gamma_.size();
    std::vector<double> two(d, 2.0);
    if (lv_) {
        FellerLV p = *lv_;
        // c~_ij x~_j with x_j = gamma_j x~_j / 2; a threshold K on x_j becomes 2K/gamma_j on x~_j,
        // which a single scalar cannot express unless gamma is constant.
        if (p.threshold > 0.0) {
            const bool uniform = std::all_of(gamma_.begin(), gamma_.end(), [&](double g) { return g == gamma_[0]; });
            if (!uniform) {
                const FellerModel self = *this;
                std::vector<double> gam = gamma_;
                return from_function(
                    two,
                    [self, gam](std::span<const double> y, std::span<double> r) {
                        std::vector<double> x(y.size());
                        for (std::size_t i = 0; i < y.size(); ++i) x[i] = gam[i] * y[i] / 2.0;
                        self.growth(x, r);
                    },
                    name_ + "_rescaled");
            }
            p.threshold = 2.0 * p.threshold / gamma_[0];
        }
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) p.c[i][j] *= gamma_[j] / 2.0;
        FellerModel m = lotka_volterra(two, std::move(p));
        m.name_ = name_;
        return m;
    }
    const FellerModel self = *this;
    std::vector<double> gam = gamma_;
    return from_function(
        two,
        [self, gam](std::span<const double> y, std::span<double> r) {
            std::vector<double> x(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) x[i] = gam[i] * y[i] / 2.0;
            self.growth(x, r);
        },
        name_ + "_rescaled");
}

ContinuousState FellerModel::to_rescaled(const ContinuousState& x) const {
    ContinuousState y = x;
    for (std::size_t i = 0; i < y.dimension(); ++i) y[i] = 2.0 * x[i] / gamma_[i];
    return y;
}

ContinuousState FellerModel::from_rescaled(const ContinuousState& y) const {
    ContinuousState x = y;
    for (std::size_t i = 0; i < x.dimension(); ++i) x[i] = gamma_[i] * y[i] / 2.0;
    return x;
}

nlohmann::json FellerModel::to_json() const {
    nlohmann::json j{{"type", "feller"}, {"name", name_}, {"gamma", gamma_}};
    if (lv_) j["lv"] = {{"r", lv_->r}, {"c", lv_->c}, {"threshold", lv_->threshold}};
    return j;
}

double feller_generator_apply(const FellerModel& model, const ContinuousState& x, std::span<const double> grad,
                              std::span<const double> hess_diag) {
    const std::size_t d = model.dimension();
    require(x.dimension() == d && grad.size() == d && hess_diag.size() == d,
            "feller_generator_apply: dimension mismatch");
    for (std::size_t i = 0; i < d; ++i) {
        if (!(x[i] > 0.0)) throw PreconditionError("feller_generator_apply: state " + to_string(x) + " is not interior");
    }
    std::vector<double> r(d);
    model.growth(x.view(), r);
    double out = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        out += x[i] * r[i] * grad[i] + 0.5 * model.gamma()[i] * x[i] * hess_diag[i];
    }
    return out;
}

void FellerScheme::validate() const {
    require(dt > 0.0 && std::isfinite(dt), "Feller scheme: dt must be positive");
    require(eps_abs > 0.0 && eps_abs < 1.0, "Feller scheme: eps_abs must lie in (0, 1)");
}

double FellerScheme::step_for(const ContinuousState& x) const {
    if (!refine_near_boundary) return dt;
    double lo = std::numeric_limits<double>::infinity();
    for (double v : x.coords)
        if (v > 0.0) lo = std::min(lo, v);
    return lo < 10.0 * dt ? 0.5 * dt : dt;
}

nlohmann::json FellerScheme::to_json() const {
    return {{"dt", dt}, {"eps_abs", eps_abs}, {"refine_near_boundary", refine_near_boundary}};
}

void feller_step_with_noise(const FellerModel& model, ContinuousState& x, double dt, std::span<const double> xi,
                            double eps_abs, std::span<double> scratch) {
    const std::size_t d = model.dimension();
    for (std::size_t i = 0; i < d; ++i) x[i] = std::max(x[i], 0.0);
    model.growth(x.view(), scratch);
    const double sdt = std::sqrt(dt);
    for (std::size_t i = 0; i < d; ++i) {
        const double xi_pos = x[i];
        double next = xi_pos + xi_pos * scratch[i] * dt + std::sqrt(model.gamma()[i] * xi_pos) * sdt * xi[i];
        if (!(next > eps_abs)) next = 0.0;
        x[i] = next;
    }
}

ContinuousState simulate_feller_step(const FellerModel& model, const ContinuousState& x, double dt, RngStream& rng,
                                     double eps_abs) {
    require(dt > 0.0, "simulate_feller_step: dt must be positive");
    require(x.dimension() == model.dimension(), "simulate_feller_step: dimension mismatch");
    if (x.absorbed()) throw PreconditionError("simulate_feller_step: state " + to_string(x) + " is absorbed");
    const std::size_t d = model.dimension();
    std::vector<double> xi(d), scratch(d);
    for (auto& z : xi) z = rng.normal();
    ContinuousState out = x;
    feller_step_with_noise(model, out, dt, xi, eps_abs, scratch);
    return out;
}

FellerSimulator::FellerSimulator(const FellerModel& model, FellerScheme scheme)
    : model_(&model), scheme_(scheme) {
    scheme_.validate();
}

double FellerSimulator::advance(ContinuousState& x, double duration, RngStream& rng) const {
    const std::size_t d = model_->dimension();
    std::vector<double> xi(d), scratch(d);
    double t = 0.0;
    while (!x.absorbed() && duration - t > 1e-12 * std::max(1.0, duration)) {
        const double h = std::min(scheme_.step_for(x), duration - t);
        for (auto& z : xi) z = rng.normal();
        feller_step_with_noise(*model_, x, h, xi, scheme_.eps_abs, scratch);
        t += h;
    }
    return x.absorbed() ? t : duration;
}

Trajectory<ContinuousState> FellerSimulator::simulate(const ContinuousState& x0, const SimBatchConfig& cfg,
                                                      RngStream& rng) const {
    const TimeGrid& grid = cfg.record_grid;
    const std::size_t n_rec = grid.size();
    const std::size_t d = model_->dimension();
    Trajectory<ContinuousState> tr;
    tr.states.reserve(n_rec);
    std::vector<double> xi(d), scratch(d);
    ContinuousState x = x0;
    double t = 0.0;
    std::size_t g = 0;
    const double tol = 1e-12 * std::max(1.0, cfg.horizon);
    while (true) {
        while (g < n_rec && grid.at(g) <= t + tol) {
            tr.states.push_back(x);
            ++g;
        }
        if (x.absorbed()) {
            while (g < n_rec) {
                tr.states.push_back(x);
                ++g;
            }
            tr.status = TrajectoryStatus::absorbed;
            break;
        }
        if (cfg.horizon - t <= tol) {
            tr.status = TrajectoryStatus::censored;
            break;
        }
        if (tr.events >= cfg.max_events) {
            tr.status = TrajectoryStatus::guard_tripped;
            break;
        }
        double h = scheme_.step_for(x);
        h = std::min(h, cfg.horizon - t);
        if (g < n_rec) h = std::min(h, grid.at(g) - t);
        for (auto& z : xi) z = rng.normal();
        feller_step_with_noise(*model_, x, h, xi, scheme_.eps_abs, scratch);
        t += h;
        ++tr.events;
        if (x.absorbed()) tr.absorption_time = t;
    }
    return tr;
}

ComparisonReport compare_with_upper_diffusions(const FellerModel& model, double a, double eta,
                                               const ContinuousState& x0, double horizon, const FellerScheme& scheme,
                                               std::size_t n_paths, const RngStream& rng, ExecPolicy policy) {
    require(a > 0.0 && eta > 0.0 && eta < 1.0, "compare_with_upper_diffusions: need a > 0 and eta in (0, 1)");
    require(horizon > 0.0, "compare_with_upper_diffusions: horizon must be positive");
    scheme.validate();
    const FellerModel rm = model.rescaled();
    const ContinuousState y0 = model.to_rescaled(x0);
    const std::size_t d = rm.dimension();
    const double a_eta = std::pow(a, eta);
    const FellerModel upper = FellerModel::from_function(
        std::vector<double>(d, 2.0),
        [a_eta](std::span<const double>, std::span<double> r) { std::fill(r.begin(), r.end(), a_eta); }, "upper");
    const FellerModel logistic = FellerModel::from_function(
        std::vector<double>(d, 2.0),
        [a_eta, eta](std::span<const double> y, std::span<double> r) {
            for (std::size_t i = 0; i < y.size(); ++i) r[i] = a_eta - std::pow(y[i], eta);
        },
        "logistic");

    std::vector<ComparisonReport> per(n_paths);
    parallel_for(policy, static_cast<std::int64_t>(n_paths), [&](std::int64_t p) {
        RngStream stream = rng.child(static_cast<std::uint64_t>(p));
        ComparisonReport& rep = per[static_cast<std::size_t>(p)];
        ContinuousState x = y0, hat = y0, bar = y0;
        std::vector<double> xi(d), scratch(d);
        double t = 0.0;
        while (horizon - t > 1e-12 * horizon) {
            bool alive = false;
            for (double v : x.coords) alive = alive || v > 0.0;
            for (double v : bar.coords) alive = alive || v > 0.0;
            if (!alive) break;
            const double h = std::min(scheme.step_for(x), horizon - t);
            for (auto& z : xi) z = stream.normal();
            feller_step_with_noise(rm, x, h, xi, scheme.eps_abs, scratch);
            feller_step_with_noise(upper, hat, h, xi, scheme.eps_abs, scratch);
            feller_step_with_noise(logistic, bar, h, xi, scheme.eps_abs, scratch);
            t += h;
            ++rep.steps_checked;
            for (std::size_t i = 0; i < d; ++i) {
                const double eu = x[i] - hat[i];
                const double el = x[i] - bar[i];
                rep.worst_upper_excess = std::max(rep.worst_upper_excess, eu);
                rep.worst_logistic_excess = std::max(rep.worst_logistic_excess, el);
                if (eu > 0.0) ++rep.upper_violations;
                if (el > 0.0) ++rep.logistic_violations;
            }
        }
    });
    ComparisonReport total;
    total.paths = n_paths;
    for (const auto& r : per) {
        total.steps_checked += r.steps_checked;
        total.upper_violations += r.upper_violations;
        total.logistic_violations += r.logistic_violations;
        total.worst_upper_excess = std::max(total.worst_upper_excess, r.worst_upper_excess);
        total.worst_logistic_excess = std::max(total.worst_logistic_excess, r.worst_logistic_excess);
    }
    return total;
}

} // namespace qsdlab::feller
