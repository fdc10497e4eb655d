#include <doctest.h>

#include "qsdlab/core/batch.hpp"
#include "qsdlab/feller/assumption.hpp"
#include "qsdlab/feller/conditions.hpp"
#include "qsdlab/feller/construction.hpp"
#include "qsdlab/feller/model.hpp"

#include <cmath>

using namespace qsdlab;
using namespace qsdlab::feller;

namespace {

FellerModel reference_model() {
    return FellerModel::lotka_volterra({2, 2}, FellerLV{{1, 1}, {{1, 0}, {0, 1}}, 0.0});
}

FellerModel skewed_model() {
    return FellerModel::lotka_volterra({1.0, 1.5}, FellerLV{{1, 0.5}, {{1, 0.3}, {0.2, 0.8}}, 0.0});
}

// Central differences of a piece's value and first derivative.
void check_piece_derivatives(const std::function<Jet(double)>& f, double x) {
    const double e = 1e-5 * std::max(1.0, x);
    const Jet j = f(x);
    const double d1 = (f(x + e).v - f(x - e).v) / (2 * e);
    const double d2 = (f(x + e).d1 - f(x - e).d1) / (2 * e);
    CHECK(d1 == doctest::Approx(j.d1).epsilon(1e-6).scale(1e-3));
    CHECK(d2 == doctest::Approx(j.d2).epsilon(1e-6).scale(1e-3));
}

} // namespace

TEST_CASE("h_beta: anchor values and the tail match at B") {
    const FellerAssumptionParams p{1.0, 0.5, 2.0, 1.0, 1.0};
    const MConstants m = compute_M(p);
    for (double beta : {m.M, m.M + 1.0, 7.5, 40.0}) {
        const HBetaFunction h = build_h_beta(p, beta, m);
        CHECK(h.p2(2.0).v == doctest::Approx(std::exp2(-beta)).epsilon(1e-15));
        CHECK(h.p2(2.0).d1 == doctest::Approx(-beta * std::exp2(-beta) / 2.0).epsilon(1e-15));
        CHECK(std::abs(h.p2(1.0).v - 1.0) < 1e-14);
        CHECK(h.value(0.25) == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(h.junction_mismatch() < 1e-9);
        CHECK(h.C_beta() > 0.0);
        using P = HBetaFunction::Piece;
        for (P piece : {P::quadratic, P::blend, P::quartic, P::tail})
            for (double x : {0.3, 0.6, 0.9, 1.4, 2.5})
                check_piece_derivatives([&](double t) { return h.piece(piece, t); }, x);
    }
    CHECK_THROWS_AS(build_h_beta(p, m.M / 2.0, m), PreconditionError);
}

TEST_CASE("h_beta: shape on grids for random (a, B_a)") {
    RngStream g(404, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const double a = 0.2 + 3.0 * g.uniform();
        const FellerAssumptionParams p{a, 0.5, a * (1.05 + 3.0 * g.uniform()), 1.0, 1.0};
        const MConstants m = compute_M(p);
        for (int k = 0; k < 5; ++k) {
            const HBetaFunction h = build_h_beta(p, m.M + 30.0 * g.uniform(), m);
            REQUIRE(h.junction_mismatch() < 1e-9);
            int bad = 0;
            double prev = h.value(p.a);
            for (int i = 1; i < 10000; ++i) {
                const double x = p.a + (4.0 * p.B_a - p.a) * i / 9999.0;
                const Jet j = h(x);
                bad += j.d1 > 0.0 || j.d2 < 0.0 || j.v > prev;
                prev = j.v;
            }
            for (int i = 0; i <= 1000; ++i) bad += h.value(p.a * (0.5 + 0.5 * i / 1000.0)) < 1.0 - 1e-14;
            CHECK(bad == 0);
        }
    }
}

TEST_CASE("C_beta tends to (a - B)^-4 and compute_M exits where it becomes positive") {
    const double a = 1.0, B = 2.0;
    double prev = c_beta(a, B, 5.0);
    for (double beta = 6.0; beta <= 60.0; beta += 1.0) {
        const double c = c_beta(a, B, beta);
        CHECK(c >= prev);
        prev = c;
    }
    CHECK(prev == doctest::Approx(1.0).epsilon(1e-12));
    // Far from B the unit-a/B correction makes C_beta negative for small beta.
    const FellerAssumptionParams p{1.0, 0.5, 10.0, 1.0, 1.0};
    const MConstants m = compute_M(p);
    CHECK(c_beta(1.0, 10.0, m.M) > 0.0);
    CHECK(c_beta(1.0, 10.0, m.M - m.grid_step) <= 0.0);
    for (double beta = m.M; beta < m.M + 50.0; beta += 0.37) CHECK(c_beta(1.0, 10.0, beta) > 0.0);
    CHECK(m.M1 > 0.0);
    CHECK(m.M2 > 0.0);
}

TEST_CASE("select_feller_beta evaluates the closed form") {
    const MConstants m{1.5, 3.0, 7.0};
    CHECK(select_feller_beta({1.0, 0.5, 2.0, 0.5, 1.0}, m) == 1.5 + 3.0 / 0.5 + 1.0);
    CHECK(select_feller_beta({0.2, 0.5, 2.0, 2.0, 1.0}, m) == 1.5 + 2.0 / 2.0 + 1.0);
    CHECK(select_feller_beta({2.0, 0.5, 3.0, 1.0, 1.0}, m) == 1.5 + 6.0 + 1.0);
    double prev = 0.0;
    for (double ca : {4.0, 2.0, 1.0, 0.5, 0.1}) {
        const double b = select_feller_beta({1.0, 0.5, 2.0, ca, 1.0}, m);
        CHECK(b > prev);
        CHECK(b >= m.M + 1.0);
        prev = b;
    }
}

TEST_CASE("g: anchor values, junctions and shape") {
    for (double eta : {0.1, 0.5, 0.9}) {
        const FellerAssumptionParams p{1.0, eta, 2.0, 1.0, 1.0};
        for (double gexp : {default_g_exponent(eta), 0.5 * (default_g_exponent(eta) + 1.0)}) {
            const GFunction g = build_g(p, gexp);
            CHECK(g.value(1.0) == 1.0);
            CHECK(g.value(2.0) == doctest::Approx(g.delta() - std::exp2(-eta / 2)).epsilon(1e-15));
            CHECK(g(1.0).d1 == doctest::Approx(gexp).epsilon(1e-15));
            CHECK(g(2.0).d1 == doctest::Approx(eta * std::exp2(-2.0 - eta / 2)).epsilon(1e-14));
            CHECK(g.junction_mismatch() < 1e-9);
            CHECK(g.shape_violations() == 0);
            for (double x : {1.1, 1.5, 1.9}) check_piece_derivatives([&](double t) { return g.bridge_piece(t); }, x);
            int bad = 0;
            for (int i = 0; i <= 4000; ++i) {
                const Jet j = g(std::pow(10.0, -6.0 + 12.0 * i / 4000.0));
                bad += !(j.d1 > 0.0) || j.d2 > 0.0;
            }
            CHECK(bad == 0);
        }
        CHECK_THROWS_AS(build_g(p, g_gamma_lower(eta) / 2), PreconditionError);
        CHECK_THROWS_AS(build_g(p, 1.0), PreconditionError);
    }
}

TEST_CASE("V and phi: zeros, quadratic piece, ratio blow-up and positive infimum") {
    const FellerModel m = reference_model();
    const FellerSetup s = auto_feller_setup(m);
    const FellerPair& pair = s.pair;
    CHECK(pair.V({0.0, 1.0}) == 0.0);
    CHECK(pair.phi({0.0, 1.0}) == 0.0);
    const double q = s.params.a / 4.0;
    CHECK(pair.phi({q, q}) == doctest::Approx(1.0 / 16.0).epsilon(1e-15));
    double prev = 0.0;
    for (double x1 = 0.1; x1 > 1e-7; x1 /= 3.0) {
        const double r = pair.V({x1, 1.0}) / pair.phi({x1, 1.0});
        CHECK(r > prev);
        prev = r;
    }
    double inf = 1e300;
    for (int i = 0; i <= 2000; ++i) {
        const double x = std::pow(10.0, -8.0 + 16.0 * i / 2000.0);
        inf = std::min(inf, s.pair.g().value(x) / s.pair.h().value(x));
    }
    CHECK(inf > 0.0);
}

TEST_CASE("generator: constants and the drift readout") {
    const FellerModel m = skewed_model();
    const ContinuousState x{0.7, 2.0};
    const double zero[2] = {0, 0};
    const double e1[2] = {1, 0};
    CHECK(feller_generator_apply(m, x, zero, zero) == 0.0);
    CHECK(feller_generator_apply(m, x, e1, zero) == doctest::Approx(0.7 * (1.0 - 0.7 - 0.3 * 2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(feller_generator_apply(m, {0.0, 1.0}, e1, zero), PreconditionError);
}

TEST_CASE("generator of V matches a short-time Monte Carlo finite difference") {
    const FellerModel m = skewed_model();
    const FellerSetup s = auto_feller_setup(m);
    const ContinuousState x{0.5, 3.0};
    const double exact = s.pair.LV(x);
    // grad V in original units, for the zero-mean control variate sum_i dV/dx_i sqrt(gamma_i x_i) W_i(h).
    const ContinuousState y = m.to_rescaled(x);
    const double g0 = s.pair.g().value(y[0]), g1 = s.pair.g().value(y[1]);
    const double grad[2] = {s.pair.g()(y[0]).d1 * g1 * 2.0 / m.gamma()[0], g0 * s.pair.g()(y[1]).d1 * 2.0 / m.gamma()[1]};
    const double V0 = s.pair.V(x);
    auto estimate = [&](double h) {
        const int sub = 20;
        const int n = 400000;
        const double dt = h / sub;
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            RngStream rng = RngStream(99, 1).child(k);
            ContinuousState z = x;
            double w[2] = {0, 0}, xi[2], scratch[2];
            for (int st = 0; st < sub; ++st) {
                xi[0] = rng.normal();
                xi[1] = rng.normal();
                w[0] += std::sqrt(dt) * xi[0];
                w[1] += std::sqrt(dt) * xi[1];
                feller_step_with_noise(m, z, dt, xi, 1e-10, scratch);
            }
            const double cv = grad[0] * std::sqrt(m.gamma()[0] * x[0]) * w[0] + grad[1] * std::sqrt(m.gamma()[1] * x[1]) * w[1];
            acc += s.pair.V(z) - V0 - cv;
        }
        return acc / n / h;
    };
    const double d_h = estimate(0.02);
    const double d_half = estimate(0.01);
    const double extrapolated = 2.0 * d_half - d_h;
    CHECK(extrapolated == doctest::Approx(exact).epsilon(0.02));
}

TEST_CASE("euler step: drift moment, frozen dynamics and the absorption floor") {
    const FellerModel m = skewed_model();
    const ContinuousState x{0.8, 1.2};
    std::vector<double> r(2);
    m.growth(x.view(), r);
    for (double h : {0.01, 0.001}) {
        RngStream rng(7, static_cast<std::uint64_t>(1.0 / h));
        const int n = 1000000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) sum += simulate_feller_step(m, x, h, rng)[0];
        const double sd = std::sqrt(m.gamma()[0] * x[0] * h / n);
        CHECK(std::abs(sum / n - x[0] * (1.0 + r[0] * h)) < 4.0 * sd);
    }
    const FellerModel frozen = FellerModel::from_function(
        {1e-300, 1e-300}, [](std::span<const double>, std::span<double> g) { g[0] = g[1] = 0.0; }, "frozen");
    RngStream rng(1, 1);
    CHECK(simulate_feller_step(frozen, {0.3, 4.0}, 0.1, rng) == ContinuousState{0.3, 4.0});
    CHECK_THROWS_AS(simulate_feller_step(m, {0.0, 1.0}, 0.1, rng), PreconditionError);
    ContinuousState z{0.5, 1.0};
    const double xi[2] = {-100.0, 0.0};
    double scratch[2];
    feller_step_with_noise(m, z, 0.01, xi, 1e-10, scratch);
    CHECK(z[0] == 0.0);
    CHECK(z.absorbed());
}

TEST_CASE("the rescaled model reproduces the original scheme step by step") {
    const FellerModel m = skewed_model();
    const FellerModel rm = m.rescaled();
    CHECK(rm.gamma() == std::vector<double>{2.0, 2.0});
    ContinuousState x{0.9, 1.7};
    ContinuousState y = m.to_rescaled(x);
    RngStream rng(5, 5);
    double scratch[2];
    for (int i = 0; i < 500 && !x.absorbed(); ++i) {
        const double xi[2] = {rng.normal(), rng.normal()};
        feller_step_with_noise(m, x, 1e-3, xi, 1e-10, scratch);
        feller_step_with_noise(rm, y, 1e-3, xi, 1e-10, scratch);
        const ContinuousState back = m.from_rescaled(y);
        REQUIRE(back[0] == doctest::Approx(x[0]).epsilon(1e-12));
        REQUIRE(back[1] == doctest::Approx(x[1]).epsilon(1e-12));
    }
}

TEST_CASE("simulator: record semantics and absorption") {
    const FellerModel m = reference_model();
    const FellerSimulator sim(m, FellerScheme{});
    SimBatchConfig cfg;
    cfg.n_trajectories = 200;
    cfg.horizon = 3.0;
    cfg.record_grid = {0.0, 0.25, 12};
    const auto batch = simulate_batch(sim, EmpiricalMeasure<ContinuousState>::dirac({0.2, 0.2}), cfg, RngStream(3, 0));
    std::size_t absorbed = 0;
    for (const auto& t : batch.trajectories) {
        REQUIRE(t.states.size() == cfg.record_grid.size());
        CHECK(t.states.front() == ContinuousState{0.2, 0.2});
        if (t.status == TrajectoryStatus::absorbed) {
            ++absorbed;
            CHECK(t.absorption_time <= 3.0);
            CHECK(t.states.back().absorbed());
        }
        for (const auto& s : t.states)
            for (double c : s.coords) CHECK(c >= 0.0);
    }
    CHECK(absorbed > 0);
    const auto again = simulate_batch(sim, EmpiricalMeasure<ContinuousState>::dirac({0.2, 0.2}), cfg, RngStream(3, 0),
                                      ExecPolicy::parallel);
    for (std::size_t i = 0; i < 200; ++i) CHECK(again.trajectories[i].states == batch.trajectories[i].states);
}

TEST_CASE("absorption becomes certain as the horizon grows") {
    const FellerModel m = reference_model();
    const FellerSimulator sim(m, FellerScheme{2e-3});
    double prev = 1.0;
    for (double horizon : {2.0, 8.0, 32.0}) {
        SimBatchConfig cfg;
        cfg.n_trajectories = 300;
        cfg.horizon = horizon;
        cfg.record_grid = {0.0, horizon, 1};
        const auto b = simulate_batch(sim, EmpiricalMeasure<ContinuousState>::dirac({1.0, 1.0}), cfg, RngStream(8, 2));
        std::size_t alive = 0;
        for (const auto& t : b.trajectories) alive += t.status != TrajectoryStatus::absorbed;
        const double frac = static_cast<double>(alive) / 300.0;
        CHECK(frac <= prev);
        prev = frac;
    }
    CHECK(prev < 0.5);
}

TEST_CASE("pathwise comparison with the upper diffusions") {
    const FellerModel m = reference_model();
    const FellerAssumptionParams p = auto_assumption_params(m);
    const ComparisonReport rep =
        compare_with_upper_diffusions(m, p.a, p.eta, {1.0, 1.0}, 2.0, FellerScheme{}, 100, RngStream(12, 0));
    CHECK(rep.paths == 100);
    CHECK(rep.steps_checked > 100);
    CHECK(rep.upper_violations == 0);
    CHECK(rep.logistic_violations == 0);
    // A growth rate the bound does not dominate is caught.
    const FellerModel fast = FellerModel::lotka_volterra({2, 2}, FellerLV{{3, 3}, {{0.1, 0}, {0, 0.1}}, 0.0});
    const ComparisonReport bad =
        compare_with_upper_diffusions(fast, 0.05, 0.5, {1.0, 1.0}, 2.0, FellerScheme{}, 20, RngStream(12, 1));
    CHECK(bad.upper_violations > 0);
}

TEST_CASE("assumption parameters for the reference model") {
    const FellerModel m = reference_model();
    const FellerAssumptionParams p = auto_assumption_params(m);
    CHECK(p.a == doctest::Approx(1.35 * 1.35));
    CHECK(p.B_a == doctest::Approx(1.1 * 2 * 1.35 * 1.35));
    CHECK(p.C_a == 1.0);
    CHECK(check_feller_assumption(m, p, default_grid(p, 2)).holds());
    FellerAssumptionParams tight = p;
    tight.a = 0.5;
    const auto cert = check_feller_assumption(m, tight, default_grid(p, 2));
    CHECK(cert.verdict == lyap::Verdict::violated);
    CHECK_FALSE(cert.counterexamples.empty());
    const FellerModel generic = FellerModel::from_function(
        {2, 2}, [](std::span<const double>, std::span<double> r) { r[0] = r[1] = -1.0; }, "generic");
    CHECK_THROWS_AS(auto_assumption_params(generic), PreconditionError);
    const FellerModel skew = skewed_model();
    const FellerAssumptionParams ps = auto_assumption_params(skew);
    CHECK(check_feller_assumption(skew, ps, default_grid(ps, 2)).holds());
    const FellerModel thr = FellerModel::lotka_volterra({2, 2}, FellerLV{{1, 1}, {{1, 0.5}, {0.5, 1}}, 2.0});
    const FellerAssumptionParams pt = auto_assumption_params(thr);
    CHECK(check_feller_assumption(thr, pt, default_grid(pt, 2)).holds());
}

TEST_CASE("conditions (a) and (b) hold on the reference grid") {
    const FellerModel m = reference_model();
    const FellerSetup s = auto_feller_setup(m);
    const LogGrid grid = default_grid(s.params, 2);
    const FellerConditionReport r = check_feller_condition_report(s.pair, s.params, s.epsilon, grid);
    CHECK(r.condition_a.holds());
    CHECK(r.condition_b.holds());
    CHECK(r.combined.holds());
    r.combined.validate();
    CHECK(r.combined.witnesses.at("C_prime") == 1.0);
    CHECK(r.combined.witnesses.at("n_star") >= 1.0);
    // Near the boundary L phi / phi >= 2/y_1 - B'.
    const double Bp = r.condition_a.witnesses.at("B_prime");
    for (double y1 : {1e-4, 1e-3, 1e-2}) {
        const double y[2] = {y1, 1.0};
        CHECK(s.pair.Lphi_over_phi_rescaled(y) >= 2.0 / y1 - Bp);
        CHECK(s.pair.Lphi_over_phi_rescaled(y) > 0.0);
    }
    CHECK_THROWS_AS(check_feller_conditions(s.pair, s.params, 1.01 * s.params.eta / (4.0 * s.beta), grid),
                    PreconditionError);
    LogGrid close = grid;
    close.lo = 1e-12;
    CHECK_THROWS_AS(check_feller_conditions(s.pair, s.params, s.epsilon, close), PreconditionError);

    const int saved = max_threads();
    set_threads(4);
    const auto par = check_feller_conditions(s.pair, s.params, s.epsilon, grid, 1e-10, ExecPolicy::parallel);
    set_threads(saved);
    CHECK(par.to_json() == check_feller_conditions(s.pair, s.params, s.epsilon, grid, 1e-10, ExecPolicy::serial).to_json());
}

TEST_CASE("survival bound: zero at the floor, monotone in x_1, finite p0") {
    const FellerModel m = reference_model();
    const FellerSetup s = auto_feller_setup(m);
    std::vector<ContinuousState> states;
    for (int i = 0; i < 20; ++i) states.push_back({0.3 * std::pow(0.6, i), 1.0});
    states.push_back({1e-10, 1.0});
    const auto rep = survival_bound_check(s.pair, 1.0, states, 4000, FellerScheme{}, RngStream(21, 0), 0.05);
    CHECK(rep.certificate.holds());
    CHECK(std::isfinite(rep.certificate.witnesses.at("p0")));
    CHECK(rep.certificate.witnesses.at("p0") > 0.0);
    CHECK(rep.estimates.back().survivors == 0);
    for (std::size_t i = 1; i < 20; ++i) CHECK(rep.estimates[i].ci.lo <= rep.estimates[i - 1].ci.hi);
    for (std::size_t i = 1; i < 20; ++i) CHECK(rep.estimates[i].survivors <= rep.estimates[i - 1].survivors);
    const auto coarse = survival_bound_check(s.pair, 1.0, states, 20, FellerScheme{}, RngStream(21, 0), 0.05);
    CHECK(coarse.certificate.verdict == lyap::Verdict::inconclusive);
}
