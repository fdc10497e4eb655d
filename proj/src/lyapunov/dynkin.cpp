#include "qsdlab/lyapunov/dynkin.hpp"

#include "qsdlab/core/error.hpp"

#include <cmath>
#include <numeric>

namespace qsdlab::lyap {

nlohmann::json DynkinReport::to_json() const {
    return {{"max_residual", max_residual}, {"quad_step", quad_step}, {"points", t.size()}};
}

DynkinReport verify_dynkin_identity(const bd::Truncation& tr, const LyapunovPair<DiscreteState>& pair,
                                    const DiscreteState& x, const TimeGrid& t_grid, double quad_step,
                                    ExecPolicy policy) {
    t_grid.validate();
    require(quad_step > 0.0, "verify_dynkin_identity: quadrature step must be positive");
    const auto start = tr.index_of(x);
    if (!start) throw PreconditionError("verify_dynkin_identity: state " + to_string(x) + " is outside the box");
    std::vector<std::size_t> node_of(t_grid.size());
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const double k = t_grid.at(i) / quad_step;
        const double r = std::round(k);
        if (std::abs(k - r) > 1e-9 * std::max(1.0, r)) {
            throw PreconditionError("verify_dynkin_identity: grid instant " + std::to_string(t_grid.at(i)) +
                                    " is not a multiple of the quadrature step");
        }
        node_of[i] = static_cast<std::size_t>(r);
    }

    const std::vector<double> V = tr.evaluate(pair.V);
    const std::vector<double> P = tr.evaluate(pair.phi);
    std::vector<double> LV(tr.size()), LP(tr.size());
    tr.apply_right(V, LV, policy);
    tr.apply_right(P, LP, policy);

    std::vector<double> p(tr.size(), 0.0);
    p[*start] = 1.0;
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    };
    auto integrand = [&](const std::vector<double>& q) {
        const double mp = dot(q, P);
        return dot(q, LV) / mp - dot(q, V) * dot(q, LP) / (mp * mp);
    };

    DynkinReport rep;
    rep.quad_step = quad_step;
    const double ratio0 = V[*start] / P[*start];
    double integral = 0.0, f_prev = integrand(p);
    std::size_t node = 0, next = 0;
    const std::size_t last_node = node_of.back();
    while (true) {
        while (next < node_of.size() && node_of[next] == node) {
            const double lhs = dot(p, V) / dot(p, P);
            const double rhs = ratio0 + integral;
            rep.t.push_back(t_grid.at(next));
            rep.lhs.push_back(lhs);
            rep.rhs.push_back(rhs);
            rep.residual.push_back(std::abs(lhs - rhs));
            rep.max_residual = std::max(rep.max_residual, rep.residual.back());
            ++next;
        }
        if (node >= last_node) break;
        p = tr.propagate_left(p, quad_step, policy);
        const double f = integrand(p);
        integral += 0.5 * quad_step * (f_prev + f);
        f_prev = f;
        ++node;
    }
    return rep;
}

} // namespace qsdlab::lyap
