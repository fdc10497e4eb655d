#include "qsdlab/qsd/oracle.hpp"

#include "qsdlab/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qsdlab::qsd {

namespace {

// Power-iteration stopping rule: the l1 change d_k shrinks geometrically with
// ratio r, so the distance to the limit is about d_k / (1 - r). Stops once
// that estimate is below tol, or once d_k reaches the rounding floor.
class ErrorEstimate {
public:
    explicit ErrorEstimate(double tol) : tol_(tol) {}
    bool converged(double diff) {
        const double r = prev_ > 0.0 ? diff / prev_ : 1.0;
        prev_ = diff;
        if (diff <= kFloor) return true;
        return r < 1.0 && diff / (1.0 - r) <= tol_;
    }

private:
    static constexpr double kFloor = 10.0 * std::numeric_limits<double>::epsilon();
    double tol_;
    double prev_ = 0.0;
};

double l1(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
}

} // namespace

double tv_box(const std::vector<double>& p, const std::vector<double>& q) {
    require(p.size() == q.size(), "tv_box: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return s;
}

EmpiricalMeasure<DiscreteState> box_measure(const bd::Truncation& tr, const std::vector<double>& w) {
    require(w.size() == tr.size(), "box_measure: size mismatch");
    EmpiricalMeasure<DiscreteState> m;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) m.add(tr.state(i), w[i]);
    return m.compacted();
}

double outer_shell_mass(const bd::Truncation& tr, const std::vector<double>& nu) {
    double s = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const auto& n = tr.state(i);
        bool outer = false;
        for (std::size_t j = 0; j < n.dimension(); ++j)
            outer = outer || static_cast<double>(n[j]) > 0.9 * static_cast<double>(tr.box()[j]);
        if (outer) s += nu[i];
    }
    return s;
}

QSDEstimate<DiscreteState> EigenOracle::estimate(const bd::Truncation& tr) const {
    QSDEstimate<DiscreteState> e;
    e.measure = box_measure(tr, nu).normalized();
    e.method = Method::eigen_oracle;
    e.lambda0 = lambda0;
    e.lambda0_ci = {lambda0, lambda0};
    e.diagnostics = to_json();
    return e;
}

nlohmann::json EigenOracle::to_json() const {
    return {{"box", box},
            {"lambda0", lambda0},
            {"residual", residual},
            {"eta_residual", eta_residual},
            {"iterations", iterations},
            {"shell_mass", shell_mass}};
}

EigenOracle qsd_eigen_oracle(const bd::Truncation& tr, double tol, std::size_t max_iter, ExecPolicy policy) {
    require(tol > 0.0, "qsd_eigen_oracle: tolerance must be positive");
    tr.check_irreducible();
    const std::size_t n = tr.size();
    const double lambda = tr.max_rate() > 0.0 ? 1.01 * tr.max_rate() : 1.0;
    EigenOracle out;
    out.box = tr.box();

    std::vector<double> p(n, 1.0 / static_cast<double>(n)), q(n), qp(n);
    std::size_t it = 0;
    ErrorEstimate left_stop(tol);
    for (; it < max_iter; ++it) {
        tr.apply_left(p, qp, policy);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += (q[i] = p[i] + qp[i] / lambda);
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            q[i] /= s;
            diff += std::abs(q[i] - p[i]);
        }
        p.swap(q);
        if (left_stop.converged(diff)) break;
    }
    if (it == max_iter) {
        throw NumericalError("qsd_eigen_oracle: power iteration did not converge in " + std::to_string(max_iter) +
                             " iterations");
    }
    out.iterations = it + 1;
    const auto& kill = tr.kill_rates();
    out.lambda0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) out.lambda0 += p[i] * kill[i];
    tr.apply_left(p, qp, policy);
    for (std::size_t i = 0; i < n; ++i) qp[i] += out.lambda0 * p[i];
    out.residual = l1(qp);
    out.nu = p;

    std::vector<double> f(n, 1.0), g(n), gf(n);
    std::size_t jt = 0;
    ErrorEstimate right_stop(tol);
    for (; jt < max_iter; ++jt) {
        tr.apply_right(f, gf, policy);
        double mx = 0.0;
        for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, g[i] = f[i] + gf[i] / lambda);
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g[i] /= mx;
            diff = std::max(diff, std::abs(g[i] - f[i]));
        }
        f.swap(g);
        if (right_stop.converged(diff)) break;
    }
    if (jt == max_iter) {
        throw NumericalError("qsd_eigen_oracle: right power iteration did not converge in " +
                             std::to_string(max_iter) + " iterations");
    }
    out.iterations = std::max(out.iterations, jt + 1);
    tr.apply_right(f, gf, policy);
    double r = 0.0, fm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r = std::max(r, std::abs(gf[i] + out.lambda0 * f[i]));
        fm = std::max(fm, std::abs(f[i]));
    }
    out.eta_residual = r / fm;
    const double norm = std::inner_product(p.begin(), p.end(), f.begin(), 0.0);
    for (double& x : f) x /= norm;
    out.eta = std::move(f);
    out.shell_mass = outer_shell_mass(tr, out.nu);
    return out;
}

EigenOracle qsd_eigen_oracle_auto(const bd::BDModel& model, std::vector<Count> box, double shell_tol,
                                  Count max_side, double tol, ExecPolicy policy) {
    require(box.size() == model.dimension(), "qsd_eigen_oracle_auto: box dimension mismatch");
    require(shell_tol > 0.0, "qsd_eigen_oracle_auto: shell tolerance must be positive");
    while (true) {
        for (Count b : box)
            if (b > max_side)
                throw NumericalError("qsd_eigen_oracle_auto: box side exceeds " + std::to_string(max_side) +
                                     " before the outer shell mass fell below tolerance");
        bd::Truncation tr(model, box);
        EigenOracle o = qsd_eigen_oracle(tr, tol, kOracleMaxIterations, policy);
        if (o.shell_mass < shell_tol) return o;
        for (Count& b : box) b = static_cast<Count>(std::ceil(1.5 * static_cast<double>(b)));
    }
}

std::vector<double> propagate_conditioned(const bd::Truncation& tr, const std::vector<double>& nu, double t,
                                          ExecPolicy policy) {
    std::vector<double> p = tr.propagate_left(nu, t, policy);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    if (!(s > 0.0)) throw NumericalError("propagate_conditioned: all mass absorbed");
    for (double& x : p) x /= s;
    return p;
}

} // namespace qsdlab::qsd
