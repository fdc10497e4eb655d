#include <doctest.h>

#include "qsdlab/bd/model.hpp"
#include "qsdlab/bd/pnm.hpp"
#include "qsdlab/bd/series.hpp"
#include "qsdlab/bd/slice.hpp"
#include "qsdlab/bd/truncation.hpp"

#include <cmath>
#include <numbers>
#include <set>

using namespace qsdlab;
using namespace qsdlab::bd;

namespace {

BDModel lv2(std::vector<double> lambda, std::vector<double> mu, std::vector<std::vector<double>> c,
            std::vector<std::vector<double>> gamma = {{0, 0}, {0, 0}}) {
    return BDModel::lotka_volterra({std::move(lambda), std::move(mu), std::move(gamma), std::move(c)});
}

BDModel reference_chain() { return lv2({1, 1}, {1, 1}, {{1, 0.2}, {0.2, 1}}); }

BDModel critical_chain() {
    return BDModel::from_function(
        2,
        [](std::span<const Count>, std::span<double> b, std::span<double> d) {
            b[0] = b[1] = 1.0;
            d[0] = d[1] = 1.0;
        },
        "critical");
}

// Slice statistics straight from the definitions, by nested loops over d = 2.
std::pair<double, double> slice_oracle_2d(const BDModel& m, Count k) {
    double dbar = -1e300, dunder = 1e300;
    for (Count a = 1; a < k; ++a) {
        const Count nn[2] = {a, k - a};
        double b[2], d[2];
        m.rates(nn, b, d);
        double edge = 0.0, inner = 0.0;
        for (int i = 0; i < 2; ++i) {
            if (nn[i] == 1) edge += d[i];
            inner += static_cast<double>(nn[i]) * ((nn[i] != 1 ? d[i] : 0.0) - b[i]);
        }
        dbar = std::max(dbar, static_cast<double>(k) * edge);
        dunder = std::min(dunder, inner);
    }
    return {dbar, dunder};
}

} // namespace

TEST_CASE("gillespie step: preconditions and the symmetric two-death case") {
    const BDModel m = BDModel::from_function(
        2,
        [](std::span<const Count>, std::span<double> b, std::span<double> d) {
            b[0] = b[1] = 0.0;
            d[0] = d[1] = 1.0;
        },
        "pure_death");
    RngStream rng(5, 0);
    CHECK_THROWS_AS(gillespie_step(m, {0, 3}, rng), PreconditionError);
    int left = 0;
    double hold = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        const Jump j = gillespie_step(m, {1, 1}, rng);
        hold += j.holding_time;
        REQUIRE((j.next == DiscreteState{0, 1} || j.next == DiscreteState{1, 0}));
        left += j.next == DiscreteState{0, 1};
    }
    CHECK(std::abs(static_cast<double>(left) / n - 0.5) < 4.0 * std::sqrt(0.25 / n));
    CHECK(std::abs(hold / n - 0.5) < 3.0 * 0.5 / std::sqrt(n));
    const BDModel frozen = BDModel::from_function(
        2, [](std::span<const Count>, std::span<double> b, std::span<double> d) {
            b[0] = b[1] = d[0] = d[1] = 0.0;
        }, "frozen");
    const Jump j = gillespie_step(frozen, {2, 2}, rng);
    CHECK(std::isinf(j.holding_time));
    CHECK(j.next == DiscreteState{2, 2});
}

TEST_CASE("gillespie jump-type frequencies match the rate table") {
    const BDModel m = lv2({1.5, 0.5}, {0.3, 1.0}, {{0.4, 0.1}, {0.2, 0.3}}, {{0.1, 0.0}, {0.05, 0.0}});
    const DiscreteState x{2, 3};
    double b[2], d[2];
    m.rates(x.view(), b, d);
    const double rates[4] = {2 * b[0], 3 * b[1], 2 * d[0], 3 * d[1]};
    const double q = rates[0] + rates[1] + rates[2] + rates[3];
    CHECK(q == doctest::Approx(m.total_rate(x)));
    const DiscreteState targets[4] = {{3, 3}, {2, 4}, {1, 3}, {2, 2}};
    int counts[4] = {0, 0, 0, 0};
    RngStream rng(11, 4);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const Jump j = gillespie_step(m, x, rng);
        for (int e = 0; e < 4; ++e) counts[e] += j.next == targets[e];
    }
    for (int e = 0; e < 4; ++e) {
        const double p = rates[e] / q;
        CHECK(std::abs(counts[e] / static_cast<double>(n) - p) < 3.0 * std::sqrt(p * (1 - p) / n));
    }
}

TEST_CASE("lv rates keep the state space: no death from an empty coordinate") {
    const BDModel m = reference_chain();
    RngStream rng(3, 3);
    DiscreteState x{1, 4};
    RateScratch s(2);
    for (int i = 0; i < 1000 && !x.absorbed(); ++i) {
        gillespie_advance(m, x, rng, s);
        for (Count c : x.coords) REQUIRE(c >= 0);
    }
}

TEST_CASE("generator: constants, telescoping and a hand-enumerated V") {
    const BDModel m = lv2({1, 2}, {0.5, 1}, {{1, 0.3}, {0.1, 0.7}}, {{0.2, 0}, {0, 0.1}});
    RngStream g(8, 8);
    for (int t = 0; t < 50; ++t) {
        const DiscreteState n{static_cast<Count>(g.below(20)) + 1, static_cast<Count>(g.below(20)) + 1};
        CHECK(generator_apply(m, [](const DiscreteState&) { return 1.0; }, n) == 0.0);
        double b[2], d[2];
        m.rates(n.view(), b, d);
        const double expect = n[0] * (b[0] - d[0]) + n[1] * (b[1] - d[1]);
        CHECK(generator_apply(m, [](const DiscreteState& s) { return static_cast<double>(total(s)); }, n) ==
              doctest::Approx(expect).epsilon(1e-13));
    }
    const BDLyapunovParams p{1.5, 2.0, 0.25, 0.5};
    auto V = [&](const DiscreteState& s) { return lyapunov_V(p, s); };
    const DiscreteState n{3, 2};
    double b[2], d[2];
    m.rates(n.view(), b, d);
    auto Vsum = [&](int m_) {
        double s = 0;
        for (int k = 1; k <= m_; ++k) s += std::pow(k, -1.5);
        return s;
    };
    const double hand = (Vsum(6) - Vsum(5)) * 3 * b[0] + (Vsum(6) - Vsum(5)) * 2 * b[1] +
                        (Vsum(4) - Vsum(5)) * 3 * d[0] + (Vsum(4) - Vsum(5)) * 2 * d[1];
    CHECK(generator_apply(m, V, n) == doctest::Approx(hand).epsilon(1e-13));
    CHECK_THROWS_AS(generator_apply(m, V, {0, 2}), PreconditionError);
}

TEST_CASE("slice enumeration visits every composition once") {
    for (std::size_t d = 2; d <= 4; ++d) {
        for (Count k = static_cast<Count>(d); k <= 14; ++k) {
            std::set<DiscreteState> seen;
            for_each_in_slice(d, k, [&](const DiscreteState& n) {
                REQUIRE(total(n) == k);
                REQUIRE(!n.absorbed());
                seen.insert(n);
            });
            CHECK(static_cast<double>(seen.size()) == slice_size(d, k));
        }
    }
    CHECK(slice_size(3, 2) == 0.0);
    CHECK(slice_size(3, 202) == 20100.0);
}

TEST_CASE("dbar/dunder: single-state slice and the three-state k = 4 slice") {
    const BDModel m = lv2({1, 1}, {1, 1}, {{1, 0}, {0, 1}});
    const SliceStats s2 = dbar_dunder(m, 2);
    double b[2], d[2];
    const Count ones[2] = {1, 1};
    m.rates(ones, b, d);
    CHECK(s2.dunder == doctest::Approx(-(b[0] + b[1])));
    const auto [dbar4, dunder4] = slice_oracle_2d(m, 4);
    const SliceStats s4 = dbar_dunder(m, 4);
    CHECK(s4.dbar == doctest::Approx(dbar4));
    CHECK(s4.dunder == doctest::Approx(dunder4));
    CHECK(s4.dbar == doctest::Approx(8.0));
    CHECK(s4.dunder == doctest::Approx(8.0));
    CHECK_THROWS_AS(dbar_dunder(m, 1), PreconditionError);
}

TEST_CASE("dbar/dunder agree with the nested-loop oracle, serial and parallel") {
    const BDModel m = lv2({1.2, 0.4}, {0.3, 0.9}, {{0.8, 0.5}, {0.1, 1.3}}, {{0.1, 0.2}, {0.0, 0.3}});
    const int saved = max_threads();
    set_threads(4);
    for (Count k = 2; k <= 80; k += 3) {
        const auto [dbar, dunder] = slice_oracle_2d(m, k);
        const SliceStats s = dbar_dunder(m, k, ExecPolicy::serial);
        const SliceStats p = dbar_dunder(m, k, ExecPolicy::parallel);
        CHECK(s.dbar == doctest::Approx(dbar).epsilon(1e-13));
        CHECK(s.dunder == doctest::Approx(dunder).epsilon(1e-13));
        CHECK(s.dbar == p.dbar);
        CHECK(s.dunder == p.dunder);
    }
    set_threads(saved);
}

TEST_CASE("closed-form lv bounds bracket the enumerated statistics") {
    RngStream g(31, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dim = 2 + g.below(2);
        LVParams p;
        p.lambda.resize(dim);
        p.mu.resize(dim);
        p.c.assign(dim, std::vector<double>(dim));
        p.gamma.assign(dim, std::vector<double>(dim));
        for (std::size_t i = 0; i < dim; ++i) {
            p.lambda[i] = 2 * g.uniform();
            p.mu[i] = 2 * g.uniform();
            for (std::size_t j = 0; j < dim; ++j) {
                p.c[i][j] = (i == j ? 0.5 : 0.0) + g.uniform();
                p.gamma[i][j] = 0.3 * g.uniform();
            }
        }
        const BDModel m = BDModel::lotka_volterra(p);
        for (Count k : {static_cast<Count>(dim), Count{7}, Count{25}}) {
            const SliceStats e = dbar_dunder(m, k);
            const SliceStats b = dbar_dunder_lv_bounds(m, k);
            CHECK_FALSE(b.exact);
            CHECK(b.dbar >= e.dbar - 1e-9 * std::abs(e.dbar));
            CHECK(b.dunder <= e.dunder + 1e-9 * std::abs(e.dunder));
        }
    }
    CHECK_THROWS_AS(dbar_dunder(reference_chain(), 200, ExecPolicy::serial, 10.0), BudgetExceeded);
    CHECK_FALSE(slice_stats(reference_chain(), 200, ExecPolicy::serial, 10.0).exact);
}

TEST_CASE("simplex quadratic minimum matches a dense grid search") {
    RngStream g(12, 1);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<double>> S(3, std::vector<double>(3));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j <= i; ++j) S[i][j] = S[j][i] = 2 * g.uniform() - 0.5;
        double grid_min = 1e300;
        const int N = 300;
        for (int a = 0; a <= N; ++a)
            for (int b = 0; a + b <= N; ++b) {
                const double y[3] = {a / double(N), b / double(N), (N - a - b) / double(N)};
                double v = 0;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) v += y[i] * S[i][j] * y[j];
                grid_min = std::min(grid_min, v);
            }
        const double m = simplex_quadratic_min(S);
        CHECK(m <= grid_min + 1e-12);
        CHECK(m >= grid_min - 0.02);
    }
}

TEST_CASE("assumption check: competitive LV holds, critical chain and huge eta fail") {
    const BDModel comp = lv2({1, 1}, {1, 1}, {{1, 0.2}, {0.3, 0.8}}, {{0.1, 0.0}, {0.0, 0.1}});
    const auto ok = check_assumption_pnm(comp, 0.25, 2, 60);
    CHECK(ok.verdict == lyap::Verdict::holds);
    CHECK(ok.witnesses.at("min_slack") >= 0.0);

    const auto crit = check_assumption_pnm(critical_chain(), 0.1, 2, 60);
    CHECK(crit.verdict == lyap::Verdict::violated);
    CHECK_FALSE(crit.counterexamples.empty());

    const auto huge = check_assumption_pnm(reference_chain(), 1e6, 2, 60);
    CHECK(huge.verdict == lyap::Verdict::violated);
    CHECK(huge.witnesses.at("first_violating_k") == 2.0);
    CHECK(huge.counterexamples.front().state.front() == 2.0);
}

TEST_CASE("dunder grows quadratically for competitive LV") {
    const BDModel m = reference_chain();
    for (Count k = 100; k <= 400; k += 100) {
        const SliceStats s = dbar_dunder(m, k);
        CHECK(s.dunder / static_cast<double>(k * k) > 0.5);
    }
}

TEST_CASE("series: values, tails and bracketing") {
    CHECK(lyapunov_V({2.0, 2.0, 0.5, 0.5}, {1, 1}) == doctest::Approx(1.25));
    CHECK(lyapunov_V({2.0, 2.0, 0.5, 0.5}, {0, 5}) == 0.0);
    CHECK(lyapunov_phi({2.0, 2.0, 0.5, 0.5}, {0, 5}) == 0.0);
    CHECK_THROWS_AS(lyapunov_V({1.0, 2.0, 0.5, 0.5}, {1, 1}), PreconditionError);
    CHECK_THROWS_AS(lyapunov_phi({2.0, 0.9, 0.5, 0.5}, {1, 1}), PreconditionError);
    const double pi2_6 = std::numbers::pi * std::numbers::pi / 6.0;
    double rem = 0.0;
    CHECK(std::abs(zeta_tail(2.0, 1, &rem) - pi2_6) < 1e-14);
    CHECK(rem < 1e-13);
    CHECK(std::abs(zeta_tail(3.0, 1) - 1.2020569031595942) < 1e-14);
    CHECK(std::abs(zeta_tail(4.0, 1) - std::pow(std::numbers::pi, 4) / 90.0) < 1e-14);
    // Tail from n0 equals zeta minus the head.
    for (Count n0 : {2, 10, 1000}) {
        double head = 0;
        for (Count k = 1; k < n0; ++k) head += 1.0 / double(k * k);
        CHECK(zeta_tail(2.0, n0) == doctest::Approx(pi2_6 - head).epsilon(1e-11));
    }
    for (double beta : {1.05, 1.5, 3.0, 12.0}) {
        const BDLyapunovParams p{1.5, beta, 0.1, 0.5};
        for (Count m : {1, 2, 10, 137, 5000}) {
            const double phi = lyapunov_phi(p, {1, m - 1 > 0 ? m - 1 : 1});
            const double mm = static_cast<double>(total({1, m - 1 > 0 ? m - 1 : 1}));
            CHECK(phi >= std::pow(mm + 1, 1 - beta) / (beta - 1) * (1 - 1e-13));
            CHECK(phi <= std::pow(mm, 1 - beta) / (beta - 1) * (1 + 1e-13));
        }
    }
}

TEST_CASE("series table: V bounded, phi decreasing, V/phi increasing to 1e4") {
    const BDLyapunovParams p{1.25, 1.4, 0.25 / 0.4, 0.5};
    const SeriesTable t(p, 10000);
    double prev_phi = 1e300, prev_ratio = 0.0;
    for (Count m = 1; m <= 10000; ++m) {
        CHECK(t.V(m) <= p.alpha / (p.alpha - 1.0));
        CHECK(t.phi(m) < prev_phi);
        CHECK(t.V(m) / t.phi(m) > prev_ratio);
        prev_phi = t.phi(m);
        prev_ratio = t.V(m) / t.phi(m);
    }
    CHECK(t.phi(57) == doctest::Approx(zeta_tail(1.4, 58)).epsilon(1e-12));
    CHECK(t.V(20000) == doctest::Approx(partial_zeta(1.25, 20000)).epsilon(1e-14));
}

TEST_CASE("closed-form generator images match generic generator application") {
    const BDModel m = lv2({1, 2}, {0.5, 1}, {{1, 0.3}, {0.1, 0.7}}, {{0.2, 0}, {0, 0.1}});
    const BDLyapunovParams p{1.3, 1.7, 0.2, 0.6};
    const SeriesTable t(p, 200);
    SeriesGenerator gen(m, t);
    RngStream g(4, 4);
    for (int i = 0; i < 200; ++i) {
        const DiscreteState n{static_cast<Count>(g.below(60)) + 1, static_cast<Count>(g.below(3)) + 1};
        const auto img = gen(n);
        CHECK(img.LV == doctest::Approx(generator_apply(m, [&](const DiscreteState& s) { return lyapunov_V(p, s); }, n))
                            .epsilon(1e-10));
        CHECK(img.Lphi ==
              doctest::Approx(generator_apply(m, [&](const DiscreteState& s) { return lyapunov_phi(p, s); }, n))
                  .epsilon(1e-9));
    }
}

TEST_CASE("parameter selection and exhaustive conditions on the reference chain") {
    const BDModel m = reference_chain();
    const auto eta = auto_eta(m, 2, 200);
    REQUIRE(eta.has_value());
    CHECK(eta->eta == 0.5);
    const BDParamSelection sel = select_bd_params(m, eta->eta, 2, 200);
    CHECK(sel.params.epsilon * (sel.params.beta - 1.0) == doctest::Approx(eta->eta / 2.0).epsilon(1e-15));
    CHECK(sel.params.alpha == 1.0 + eta->eta / 2.0);
    CHECK(sel.params.beta <= 1.0 + 1.0 / eta->eta + 0.05);
    const auto a = check_bd_condition_a(m, sel.params, 2, 200);
    CHECK(a.verdict == lyap::Verdict::holds);
    CHECK(a.witnesses.at("lower_bound_failures") == 0.0);
    const auto b = check_bd_condition_b(m, sel.params, 2, 200);
    CHECK(b.verdict == lyap::Verdict::holds);

    const int saved = max_threads();
    set_threads(3);
    const auto ap = check_bd_condition_a(m, sel.params, 2, 200, ExecPolicy::parallel);
    const auto as = check_bd_condition_a(m, sel.params, 2, 200, ExecPolicy::serial);
    set_threads(saved);
    CHECK(ap.to_json() == as.to_json());
}

TEST_CASE("parameter selection fails for a model violating the assumption") {
    CHECK_THROWS_AS(select_bd_params(critical_chain(), 0.1, 2, 60), PreconditionError);
}

TEST_CASE("tabulated rates reproduce the lv model inside the box") {
    const BDModel lv = reference_chain();
    TabulatedRates t;
    t.box = {5, 4};
    for (Count a = 1; a <= 5; ++a)
        for (Count b = 1; b <= 4; ++b) {
            double br[2], dr[2];
            const Count n[2] = {a, b};
            lv.rates(n, br, dr);
            t.birth.insert(t.birth.end(), br, br + 2);
            t.death.insert(t.death.end(), dr, dr + 2);
        }
    const BDModel tab = BDModel::tabulated(t);
    CHECK(tab.total_rate({3, 2}) == lv.total_rate({3, 2}));
    double br[2], dr[2];
    const Count clamped[2] = {5, 2};
    lv.rates(clamped, br, dr);
    CHECK(tab.total_rate({9, 2}) == doctest::Approx(9 * (br[0] + dr[0]) + 2 * (br[1] + dr[1])));
    t.outside = "nope";
    CHECK_THROWS_AS(BDModel::tabulated(t), PreconditionError);
}

TEST_CASE("truncation: semigroup identities") {
    const BDModel m = reference_chain();
    const Truncation tr(m, {8, 8});
    CHECK(tr.size() == 64);
    tr.check_irreducible();
    std::vector<double> p(tr.size(), 0.0), f(tr.size());
    p[*tr.index_of({2, 3})] = 1.0;
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = 1.0 + std::sin(static_cast<double>(i));
    CHECK(tr.propagate_left(p, 0.0) == p);
    const auto pt = tr.propagate_left(p, 0.7);
    const auto ft = tr.propagate_right(f, 0.7);
    double lhs = 0, rhs = 0, mass = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        lhs += pt[i] * f[i];
        rhs += p[i] * ft[i];
        mass += pt[i];
        CHECK(pt[i] >= -1e-15);
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    CHECK(mass < 1.0);
    const auto twice = tr.propagate_left(tr.propagate_left(p, 0.35), 0.35);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(twice[i] == doctest::Approx(pt[i]).epsilon(1e-11));
    CHECK_THROWS_AS(tr.propagate_left(p, 1e9), NumericalError);
}

TEST_CASE("truncation: mean absorption time matches simulation within 3 standard errors") {
    const BDModel m = reference_chain();
    const Truncation tr(m, {40, 40});
    const auto times = tr.mean_absorption_times();
    const double exact = times[*tr.index_of({3, 3})];
    BDSimulator sim(m);
    SimBatchConfig cfg;
    cfg.n_trajectories = 20000;
    cfg.horizon = 1e6;
    cfg.record_grid = {0.0, 1.0, 1};
    const auto batch = simulate_batch(sim, EmpiricalMeasure<DiscreteState>::dirac({3, 3}), cfg, RngStream(2, 9));
    double s = 0, s2 = 0;
    for (const auto& t : batch.trajectories) {
        REQUIRE(t.status == TrajectoryStatus::absorbed);
        s += t.absorption_time;
        s2 += t.absorption_time * t.absorption_time;
    }
    const double n = static_cast<double>(cfg.n_trajectories);
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(mean - exact) < 3.0 * se);
}

TEST_CASE("simulator records the state holding at each grid instant") {
    const BDModel m = reference_chain();
    BDSimulator sim(m);
    SimBatchConfig cfg;
    cfg.n_trajectories = 200;
    cfg.horizon = 5.0;
    cfg.record_grid = {0.0, 0.5, 10};
    const auto batch = simulate_batch(sim, EmpiricalMeasure<DiscreteState>::dirac({4, 4}), cfg, RngStream(6, 1));
    for (const auto& t : batch.trajectories) {
        REQUIRE(t.states.size() == cfg.record_grid.size());
        CHECK(t.states.front() == DiscreteState{4, 4});
        bool dead = false;
        for (const auto& s : t.states) {
            if (dead) CHECK(s.absorbed());
            dead = dead || s.absorbed();
        }
        if (t.status == TrajectoryStatus::absorbed) CHECK(t.absorption_time <= 5.0);
    }
}
