#include <doctest.h>

#include "qsdlab/bd/pnm.hpp"
#include "qsdlab/bd/slice.hpp"
#include "qsdlab/bd/truncation.hpp"
#include "qsdlab/feller/conditions.hpp"
#include "qsdlab/lyapunov/checks.hpp"
#include "qsdlab/lyapunov/dynkin.hpp"
#include "qsdlab/lyapunov/pair.hpp"
#include "qsdlab/lyapunov/probes.hpp"

#include <cmath>

using namespace qsdlab;
using namespace qsdlab::lyap;

namespace {

bd::BDModel reference_chain() {
    return bd::BDModel::lotka_volterra({{1, 1}, {1, 1}, {{0, 0}, {0, 0}}, {{1, 0.2}, {0.2, 1}}});
}

const bd::BDLyapunovParams kRefParams{1.25, 2.25, 0.2, 0.5};

std::vector<DiscreteState> box_states(Count lo, Count hi) {
    std::vector<DiscreteState> out;
    for (Count a = lo; a <= hi; ++a)
        for (Count b = lo; b <= hi; ++b) out.push_back({a, b});
    return out;
}

ConditionDomain<DiscreteState> slice_domain(Count k_lo, Count k_hi) {
    ConditionDomain<DiscreteState> dom;
    for (Count k = k_lo; k <= k_hi; ++k)
        bd::for_each_in_slice(2, k, [&](const DiscreteState& n) { dom.states.push_back(n); });
    dom.exhaustion_index = bd_exhaustion_index;
    dom.description = "slices";
    return dom;
}

} // namespace

TEST_CASE("admissible: series pair grows like |n|^(beta-1) along the diagonal") {
    const auto m = reference_chain();
    const auto pair = make_bd_pair(m, kRefParams);
    std::vector<DiscreteState> escape;
    for (Count k = 100; k <= 6400; k *= 2) escape.push_back({k, k});
    const auto cert = check_admissible<DiscreteState>(pair, escape, [](const DiscreteState& n) {
        return static_cast<double>(total(n));
    });
    CHECK(cert.holds());
    // V -> zeta(alpha), phi ~ k^(1-beta)/(beta-1): log-slope beta - 1.
    CHECK(cert.witnesses.at("log_ratio_trend") == doctest::Approx(kRefParams.beta - 1.0).epsilon(0.02));
    CHECK(cert.witnesses.at("inf_V_over_phi") > 0.0);
}

TEST_CASE("admissible: V = phi breaks V/phi -> infinity") {
    const auto m = reference_chain();
    auto pair = make_bd_pair(m, kRefParams);
    pair.V = pair.phi;
    pair.LV = pair.Lphi;
    std::vector<DiscreteState> escape;
    for (Count k = 1; k <= 64; k *= 2) escape.push_back({k, k});
    const auto cert = check_admissible<DiscreteState>(pair, escape, [](const DiscreteState& n) {
        return static_cast<double>(total(n));
    });
    CHECK(cert.verdict == Verdict::violated);
    CHECK(!cert.counterexamples.empty());
}

TEST_CASE("admissible: Feller pair as the first coordinate goes to 0") {
    const auto model = feller::FellerModel::lotka_volterra({2, 2}, feller::FellerLV{{1, 1}, {{1, 0}, {0, 1}}, 0.0});
    const auto setup = feller::auto_feller_setup(model);
    const auto pair = make_feller_pair(setup.pair);
    std::vector<ContinuousState> escape;
    for (int j = 0; j < 12; ++j) escape.push_back({0.5 * std::pow(0.5, j), 1.0});
    const auto cert = check_admissible<ContinuousState>(pair, escape, [&](const ContinuousState& x) {
        return static_cast<double>(feller_exhaustion_index(model, x));
    });
    CHECK(cert.holds());
    // phi ~ x^gamma and V ~ x^2 near 0: the ratio behaves like x^(gamma - 2).
    CHECK(cert.witnesses.at("log_ratio_trend") > 0.0);
}

TEST_CASE("nonlinear inequality: point masses reduce to pointwise algebra") {
    const auto m = reference_chain();
    const auto pair = make_bd_pair(m, kRefParams);
    std::vector<EmpiricalMeasure<DiscreteState>> deltas;
    const auto pool = box_states(1, 6);
    for (const auto& n : pool) deltas.push_back(EmpiricalMeasure<DiscreteState>::dirac(n));
    const auto rep = check_nonlinear_inequality(pair, deltas, kRefParams.epsilon, ExecPolicy::serial);
    REQUIRE(rep.rows.size() == pool.size());
    const double e = kRefParams.epsilon;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const double v = pair.V(pool[i]), p = pair.phi(pool[i]);
        const double lhs = pair.LV(pool[i]) - v * pair.Lphi(pool[i]) / p;
        CHECK(rep.rows[i].lhs == doctest::Approx(lhs).epsilon(1e-12));
        CHECK(rep.rows[i].mu_phi == doctest::Approx(p).epsilon(1e-14));
        CHECK(rep.rows[i].feature == doctest::Approx(std::pow(v, 1 + e) / std::pow(p, e)).epsilon(1e-12));
        // Hoelder is an equality for a single atom.
        CHECK(rep.rows[i].holder_lhs == doctest::Approx(rep.rows[i].holder_rhs).epsilon(1e-12));
    }
}

TEST_CASE("nonlinear inequality: 500 mixtures on the truncation hold, Hoelder per measure") {
    const auto m = reference_chain();
    const auto pair = make_bd_pair(m, kRefParams);
    const auto pool = box_states(1, 15);
    const auto measures = sample_mixture_measures(pool, 500, RngStream(11, 0));
    const auto rep = check_nonlinear_inequality(pair, measures, kRefParams.epsilon);
    CHECK(rep.certificate.holds());
    CHECK(rep.certificate.witnesses.at("violations") == 0.0);
    CHECK(rep.fitted.A > 0.0);
    CHECK(rep.fitted.B > 0.0);
    for (const auto& r : rep.rows) {
        CHECK(r.holder_lhs <= r.holder_rhs * (1 + 1e-12));
        CHECK(r.lhs <= rep.fitted.A * r.mu_phi - rep.fitted.B * r.feature + 1e-12 * std::abs(r.lhs));
    }
    CHECK(!rep.pareto.empty());
}

TEST_CASE("nonlinear inequality: serial and parallel agree") {
    const auto m = reference_chain();
    const auto pair = make_bd_pair(m, kRefParams);
    const auto measures = sample_mixture_measures(box_states(1, 10), 100, RngStream(3, 1));
    const auto a = check_nonlinear_inequality(pair, measures, kRefParams.epsilon, ExecPolicy::serial);
    const auto b = check_nonlinear_inequality(pair, measures, kRefParams.epsilon, ExecPolicy::parallel);
    CHECK(a.certificate.to_json() == b.certificate.to_json());
}

TEST_CASE("conditions: generic checks on slices match the slice enumeration") {
    const auto m = reference_chain();
    const auto pair = make_bd_pair(m, kRefParams);
    const auto dom = slice_domain(2, 200);
    const auto a = check_condition_a(pair, dom);
    const auto a_bd = bd::check_bd_condition_a(m, kRefParams, 2, 200);
    REQUIRE(a.holds());
    REQUIRE(a_bd.holds());
    CHECK(a.witnesses.at("n") + 1 == a_bd.witnesses.at("k_star"));
    CHECK(a.witnesses.at("C") == doctest::Approx(a_bd.witnesses.at("C")).epsilon(1e-12));

    const auto b = check_condition_b(pair, kRefParams.epsilon, dom);
    CHECK(b.holds());
    CHECK(b.witnesses.at("C_prime") > 0.0);
    CHECK(std::isfinite(b.witnesses.at("C_second")));
}

TEST_CASE("conditions: constant phi gives Lphi = 0 and C = 0") {
    LyapunovPair<DiscreteState> pair;
    pair.V = [](const DiscreteState& n) { return n.absorbed() ? 0.0 : 1.0 - 1.0 / static_cast<double>(total(n)); };
    pair.phi = [](const DiscreteState& n) { return n.absorbed() ? 0.0 : 1.0; };
    pair.LV = [](const DiscreteState&) { return -1.0; };
    pair.Lphi = [](const DiscreteState&) { return 0.0; };
    const auto cert = check_condition_a(pair, slice_domain(2, 50));
    CHECK(cert.holds());
    CHECK(cert.witnesses.at("C") == 0.0);
    CHECK(cert.witnesses.at("failures") == 0.0);
}

TEST_CASE("conditions: a failure on the outer layer is a violation") {
    LyapunovPair<DiscreteState> pair;
    pair.V = [](const DiscreteState&) { return 1.0; };
    pair.phi = [](const DiscreteState&) { return 1.0; };
    pair.LV = [](const DiscreteState&) { return 0.0; };
    pair.Lphi = [](const DiscreteState& n) { return total(n) == 40 ? -1.0 : 0.0; };
    CHECK(check_condition_a(pair, slice_domain(2, 40)).verdict == Verdict::violated);
    // The same failure is interior once the domain grows past it.
    CHECK(check_condition_a(pair, slice_domain(2, 41)).holds());
}

TEST_CASE("dynkin: residual vanishes at t = 0 and quarters when the step halves") {
    const auto m = reference_chain();
    const auto pair = make_bd_pair(m, kRefParams);
    bd::Truncation tr(m, {8, 8});
    const DiscreteState x{1, 1};
    const auto coarse = verify_dynkin_identity(tr, pair, x, {0.0, 0.1, 10}, 1e-2);
    const auto fine = verify_dynkin_identity(tr, pair, x, {0.0, 0.1, 10}, 5e-3);
    CHECK(coarse.residual.front() == 0.0);
    CHECK(coarse.lhs.front() == doctest::Approx(pair.V(x) / pair.phi(x)).epsilon(1e-15));
    REQUIRE(fine.max_residual > 0.0);
    CHECK(coarse.max_residual / fine.max_residual == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("dynkin: grid instants must sit on the quadrature lattice") {
    const auto m = reference_chain();
    const auto pair = make_bd_pair(m, kRefParams);
    bd::Truncation tr(m, {4, 4});
    CHECK_THROWS_AS(verify_dynkin_identity(tr, pair, {1, 1}, {0.0, 0.15, 2}, 0.1), PreconditionError);
    CHECK_THROWS_AS(verify_dynkin_identity(tr, pair, {9, 1}, {0.0, 0.1, 2}, 0.1), PreconditionError);
}

TEST_CASE("plateau test: flat, trending and noisy curves") {
    std::vector<double> t, flat, trend;
    for (int i = 0; i < 20; ++i) {
        t.push_back(i);
        flat.push_back(3.0 - std::exp(-static_cast<double>(i)));
        trend.push_back(1.0 + 0.5 * i);
    }
    CHECK(plateau_test(t, flat).flat);
    CHECK_FALSE(plateau_test(t, trend).flat);
}

TEST_CASE("doeblin: a single start has a1 = 1 against its own kernel") {
    const auto m = reference_chain();
    bd::Truncation tr(m, {30, 30});
    const std::vector<DiscreteState> one{{2, 3}};
    const auto exact = doeblin_exact(tr, one, {0.0, 0.25, 4}, true);
    for (double a : exact.a1) CHECK(a == doctest::Approx(1.0).epsilon(1e-12));
    const auto unconditioned = doeblin_exact(tr, one, {0.0, 0.25, 4}, false);
    CHECK(unconditioned.a1.front() == 1.0);
    CHECK(unconditioned.a1.back() < 1.0);

    const bd::BDSimulator sim(m);
    const auto cert = doeblin_probe(sim, one, {0.0, 0.25, 4}, 2000, RngStream(5, 0), true);
    CHECK(cert.holds());
    CHECK(cert.witnesses.at("a1") == doctest::Approx(1.0));
}

TEST_CASE("doeblin: Monte Carlo minorization matches the truncation kernels") {
    const auto m = reference_chain();
    bd::Truncation tr(m, {30, 30});
    const std::vector<DiscreteState> small{{1, 1}, {1, 2}, {2, 1}, {2, 2}};
    const TimeGrid window{0.0, 0.5, 2};  // s in {0, 0.5, 1}
    const bd::BDSimulator sim(m);
    for (bool conditioned : {false, true}) {
        const auto exact = doeblin_exact(tr, small, window, conditioned);
        CHECK(exact.a1[0] == 0.0);
        CHECK(exact.a1[1] > 0.0);
        const auto cert = doeblin_probe(sim, small, window, 40000, RngStream(21, conditioned ? 1 : 0), conditioned);
        REQUIRE(cert.holds());
        const double s = cert.witnesses.at("s");
        const std::size_t g = static_cast<std::size_t>(std::lround(s / window.dt));
        CHECK(g > 0);
        CHECK(cert.witnesses.at("a1") == doctest::Approx(exact.a1[g]).epsilon(0.08));
        CHECK(cert.witnesses.at("a1_lower") <= exact.a1[g]);
    }
}

TEST_CASE("doeblin: serial and parallel probes are identical") {
    const auto m = reference_chain();
    const bd::BDSimulator sim(m);
    const std::vector<DiscreteState> small{{1, 1}, {2, 2}};
    const auto a = doeblin_probe(sim, small, {0.0, 0.5, 2}, 500, RngStream(8, 2), false, ExecPolicy::serial);
    const auto b = doeblin_probe(sim, small, {0.0, 0.5, 2}, 500, RngStream(8, 2), false, ExecPolicy::parallel);
    CHECK(a.to_json() == b.to_json());
}

TEST_CASE("return probability: far starts come back to a small set") {
    const auto m = reference_chain();
    const bd::BDSimulator sim(m);
    const std::vector<DiscreteState> starts{{20, 20}, {40, 5}, {5, 40}};
    const auto cert = return_probability_probe<bd::BDSimulator>(
        sim, starts, 1.0, [](const DiscreteState& n) { return total(n) <= 8; }, 2000, RngStream(4, 0));
    CHECK(cert.holds());
    CHECK(cert.witnesses.at("D_n") > 0.0);
}

TEST_CASE("harnack: singleton ratio is 1; exact ratio plateaus; MC brackets exact") {
    const auto m = reference_chain();
    bd::Truncation tr(m, {30, 30});
    const TimeGrid grid{0.0, 0.1, 20};
    const auto single = harnack_ratio_exact(tr, {{3, 3}}, grid);
    for (double r : single) CHECK(r == 1.0);

    const std::vector<DiscreteState> states{{1, 1}, {3, 3}, {6, 2}};
    const auto exact = harnack_ratio_exact(tr, states, grid);
    CHECK(exact.front() == 1.0);
    CHECK(plateau_test(grid.instants(), exact).flat);

    const bd::BDSimulator sim(m);
    const auto rep = harnack_ratio_probe(sim, states, grid, 100000, RngStream(13, 0));
    REQUIRE(rep.t.size() >= 6);
    std::size_t inside = 0;
    for (std::size_t g = 0; g < rep.t.size(); ++g)
        if (exact[g] >= rep.lo[g] && exact[g] <= rep.hi[g]) ++inside;
    CHECK(inside == rep.t.size());
    CHECK(rep.certificate.holds());
    CHECK(rep.certificate.qualifier == "empirical");
}

TEST_CASE("harnack: unresolved survival truncates the grid") {
    const auto m = reference_chain();
    const bd::BDSimulator sim(m);
    const auto rep = harnack_ratio_probe(sim, {{1, 1}, {2, 2}}, {0.0, 5.0, 40}, 200, RngStream(2, 0));
    CHECK(rep.t.size() < 41);
    CHECK(!rep.certificate.notes.empty());
}

TEST_CASE("exponential moments: inside U the moment is 1") {
    const auto m = reference_chain();
    const auto rep = expo_moment_probe(m, {{1, 1}, {2, 3}}, 5, 1.0, 100, RngStream(1, 0));
    for (const auto& r : rep.rows) CHECK(r.moment == 1.0);
    CHECK(rep.certificate.holds());
}

TEST_CASE("exponential moments: flat in the distance of the start, larger for larger lambda") {
    const auto m = reference_chain();
    const std::vector<DiscreteState> starts{{25, 25}, {50, 50}, {100, 100}};
    const auto a = expo_moment_probe(m, starts, 10, 1.0, 4000, RngStream(9, 0));
    const auto b = expo_moment_probe(m, starts, 10, 2.0, 4000, RngStream(9, 0));
    CHECK(a.certificate.holds());
    CHECK(b.certificate.holds());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        CHECK(a.rows[i].moment > 1.0);
        CHECK(b.rows[i].moment > a.rows[i].moment);
    }
}
