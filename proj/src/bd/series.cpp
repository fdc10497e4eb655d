#include "qsdlab/bd/series.hpp"

#include "qsdlab/core/error.hpp"

#include <algorithm>
#include <cmath>

namespace qsdlab::bd {

void BDLyapunovParams::validate() const {
    require(alpha > 1.0, "Lyapunov parameters: alpha must exceed 1 (the V series diverges otherwise)");
    require(beta > 1.0, "Lyapunov parameters: beta must exceed 1 (the phi series diverges otherwise)");
    require(epsilon > 0.0, "Lyapunov parameters: epsilon must be positive");
    require(eta > 0.0, "Lyapunov parameters: eta must be positive");
}

nlohmann::json BDLyapunovParams::to_json() const {
    return {{"alpha", alpha}, {"beta", beta}, {"epsilon", epsilon}, {"eta", eta}};
}

double zeta_tail(double s, Count n0, double* remainder_bound) {
    require(s > 1.0, "zeta_tail: exponent must exceed 1");
    require(n0 >= 1, "zeta_tail: start index must be >= 1");
    // Remainder of the truncated Euler-Maclaurin expansion at cutoff M is at
    // most s(s+1)(s+2)(s+3)(s+4) M^{-s-5} / 30240; the leading term is
    // M^{1-s}/(s-1). Pick M so the ratio is below 1e-13.
    const double poly = s * (s + 1) * (s + 2) * (s + 3) * (s + 4);
    const double m_min = std::ceil(std::pow(poly * (s - 1.0) / 30240.0 * 1e13, 1.0 / 6.0));
    const Count M = std::max<Count>(n0, static_cast<Count>(std::max(m_min, 8.0)));
    double direct = 0.0;
    for (Count k = M - 1; k >= n0; --k) direct += std::pow(static_cast<double>(k), -s);
    const double m = static_cast<double>(M);
    const double ms = std::pow(m, -s);
    const double tail = m * ms / (s - 1.0) + 0.5 * ms + s * ms / (12.0 * m) -
                        s * (s + 1) * (s + 2) * ms / (720.0 * m * m * m);
    if (remainder_bound) *remainder_bound = poly * ms / (30240.0 * std::pow(m, 5.0));
    return tail + direct;
}

double partial_zeta(double s, Count m) {
    double acc = 0.0;
    for (Count k = m; k >= 1; --k) acc += std::pow(static_cast<double>(k), -s);
    return acc;
}

SeriesTable::SeriesTable(const BDLyapunovParams& params, Count k_max) : p_(params), k_max_(k_max) {
    p_.validate();
    require(k_max >= 1, "SeriesTable: k_max must be >= 1");
    const std::size_t n = static_cast<std::size_t>(k_max) + 2;
    v_.assign(n, 0.0);
    phi_.assign(n, 0.0);
    for (std::size_t k = 1; k < n; ++k) v_[k] = v_[k - 1] + std::pow(static_cast<double>(k), -p_.alpha);
    phi_[n - 1] = zeta_tail(p_.beta, static_cast<Count>(n));
    for (std::size_t k = n - 1; k-- > 0;) phi_[k] = phi_[k + 1] + std::pow(static_cast<double>(k + 1), -p_.beta);
}

double SeriesTable::V(Count m) const {
    if (m <= 0) return 0.0;
    if (static_cast<std::size_t>(m) < v_.size()) return v_[static_cast<std::size_t>(m)];
    return partial_zeta(p_.alpha, m);
}

double SeriesTable::phi(Count m) const {
    if (m <= 0) return zeta_tail(p_.beta, 1);
    if (static_cast<std::size_t>(m) < phi_.size()) return phi_[static_cast<std::size_t>(m)];
    return zeta_tail(p_.beta, m + 1);
}

double lyapunov_V(const BDLyapunovParams& params, const DiscreteState& n) {
    params.validate();
    if (n.absorbed()) return 0.0;
    return partial_zeta(params.alpha, total(n));
}

double lyapunov_phi(const BDLyapunovParams& params, const DiscreteState& n) {
    params.validate();
    if (n.absorbed()) return 0.0;
    return zeta_tail(params.beta, total(n) + 1);
}

SeriesGenerator::SeriesGenerator(const BDModel& model, const SeriesTable& table)
    : model_(&model), table_(&table), scratch_(model.dimension()) {}

GeneratorImages SeriesGenerator::operator()(const DiscreteState& n) {
    if (n.absorbed()) throw PreconditionError("series generator: state " + to_string(n) + " is absorbed");
    const std::size_t d = model_->dimension();
    model_->rates(n.view(), scratch_.birth, scratch_.death);
    const Count m = total(n);
    const double md = static_cast<double>(m);
    const BDLyapunovParams& p = table_->params();
    double births = 0.0, deaths = 0.0, edge = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double nj = static_cast<double>(n[j]);
        births += nj * scratch_.birth[j];
        if (n[j] == 1) {
            edge += scratch_.death[j];
        } else {
            deaths += nj * scratch_.death[j];
        }
    }
    GeneratorImages g;
    g.LV = births * std::pow(md + 1.0, -p.alpha) - deaths * std::pow(md, -p.alpha) - edge * table_->V(m);
    g.Lphi = -births * std::pow(md + 1.0, -p.beta) + deaths * std::pow(md, -p.beta) - edge * table_->phi(m);
    return g;
}

} // namespace qsdlab::bd
