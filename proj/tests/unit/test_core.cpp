#include <doctest.h>

#include "qsdlab/core/batch.hpp"
#include "qsdlab/core/io.hpp"
#include "qsdlab/core/measure.hpp"
#include "qsdlab/core/rng.hpp"
#include "qsdlab/core/stats.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace qsdlab;

namespace {

EmpiricalMeasure<DiscreteState> random_measure(RngStream& g, std::size_t atoms, Count range) {
    EmpiricalMeasure<DiscreteState> m;
    for (std::size_t i = 0; i < atoms; ++i) {
        DiscreteState s{static_cast<Count>(g.below(range)) + 1, static_cast<Count>(g.below(range)) + 1};
        m.add(s, g.uniform() + 1e-3);
    }
    return m.normalized();
}

// Independent TV oracle: dense accumulation over a map keyed by state.
double tv_oracle(const EmpiricalMeasure<DiscreteState>& a, const EmpiricalMeasure<DiscreteState>& b) {
    std::map<DiscreteState, double> diff;
    for (const auto& x : a.atoms()) diff[x.state] += x.weight;
    for (const auto& x : b.atoms()) diff[x.state] -= x.weight;
    double s = 0.0;
    for (const auto& [k, v] : diff) s += std::abs(v);
    return s;
}

struct CoinFlipSim {
    using State = DiscreteState;
    std::size_t dimension() const { return 2; }
    Trajectory<DiscreteState> simulate(const DiscreteState& x, const SimBatchConfig& cfg, RngStream& rng) const {
        Trajectory<DiscreteState> tr;
        DiscreteState s = x;
        for (std::size_t g = 0; g < cfg.record_grid.size(); ++g) {
            tr.states.push_back(s);
            s[rng.below(2)] += 1;
        }
        return tr;
    }
};

} // namespace

TEST_CASE("philox known-answer vectors") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("rng streams are reproducible and distinct") {
    RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        CHECK(x != c.next_u64());
        CHECK(x != d.next_u64());
    }
    // child streams depend only on (seed, stream id, index)
    RngStream p(1, 2);
    p.next_u64();
    RngStream q(1, 2);
    CHECK(p.child(5).next_u64() == q.child(5).next_u64());
    CHECK(q.child(5).next_u64() != q.child(6).next_u64());
}

TEST_CASE("uniform and below stay in range with sane moments") {
    RngStream r(9, 0);
    double sum = 0.0;
    std::size_t counts[3] = {0, 0, 0};
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        counts[r.below(3)]++;
    }
    CHECK(std::abs(sum / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
    for (auto c : counts) CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 3.0) < 4.0 * std::sqrt(2.0 / 9.0 / n));
    double m = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        m += z;
        m2 += z * z;
    }
    CHECK(std::abs(m / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(m2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("tv distance: hand values") {
    using M = EmpiricalMeasure<DiscreteState>;
    const M a = M::dirac({1, 1});
    CHECK(tv_distance(a, a) == 0.0);
    CHECK(tv_distance(a, M::dirac({1, 2})) == doctest::Approx(2.0));
    M p, q;
    p.add({1, 1}, 0.5);
    p.add({1, 2}, 0.3);
    p.add({2, 1}, 0.2);
    q.add({1, 1}, 0.2);
    q.add({1, 2}, 0.3);
    q.add({2, 2}, 0.5);
    // |0.5-0.2| + 0 + 0.2 + 0.5
    CHECK(tv_distance(p, q) == doctest::Approx(1.0).epsilon(1e-15));
    M unnorm;
    unnorm.add({1, 1}, 2.0);
    CHECK_THROWS_AS(tv_distance(unnorm, a), PreconditionError);
}

TEST_CASE("tv distance: metric properties on random measures") {
    RngStream g(2024, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_measure(g, 1 + g.below(12), 5);
        const auto b = random_measure(g, 1 + g.below(12), 5);
        const auto c = random_measure(g, 1 + g.below(12), 5);
        const double ab = tv_distance(a, b);
        CHECK(ab == doctest::Approx(tv_oracle(a, b)).epsilon(1e-12));
        CHECK(ab >= 0.0);
        CHECK(ab <= 2.0);
        CHECK(ab == doctest::Approx(tv_distance(b, a)).epsilon(1e-14));
        CHECK(tv_distance(a, a) <= 1e-14);
        CHECK(ab <= tv_distance(a, c) + tv_distance(c, b) + 1e-12);
    }
}

TEST_CASE("binned tv requires matching grids") {
    EmpiricalMeasure<ContinuousState> m;
    m.add({0.5, 0.5}, 1.0);
    m.add({1.5, 2.5}, 1.0);
    const BinGrid g1{{0.0, 0.0}, {2.0, 3.0}, {4, 4}};
    const BinGrid g2{{0.0, 0.0}, {2.0, 3.0}, {5, 4}};
    CHECK(tv_distance(bin(m, g1), bin(m, g1)) == 0.0);
    CHECK_THROWS(tv_distance(bin(m, g1), bin(m, g2)));
    CHECK(g1.cell({-1.0, 10.0}) == DiscreteState{0, 3});
}

TEST_CASE("stats helpers") {
    const Interval w = wilson_interval(5, 10);
    CHECK(w.lo == doctest::Approx(0.2365931).epsilon(1e-6));
    CHECK(w.hi == doctest::Approx(0.7634069).epsilon(1e-6));
    CHECK(wilson_interval(0, 20).lo == 0.0);
    CHECK(student_t_quantile(0.975, 10) == doctest::Approx(2.228138851986).epsilon(1e-10));
    const std::vector<double> x{0, 1, 2, 3, 4}, y{1, 3, 5, 7, 9};
    const LinearFit f = linear_fit(x, y);
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r_squared == doctest::Approx(1.0));
    CHECK(f.slope_se == doctest::Approx(0.0));
}

TEST_CASE("batch driver: serial and parallel agree, results independent of batch size") {
    CoinFlipSim sim;
    SimBatchConfig cfg;
    cfg.n_trajectories = 300;
    cfg.horizon = 10.0;
    cfg.record_grid = {0.0, 1.0, 10};
    EmpiricalMeasure<DiscreteState> init;
    init.add({1, 1}, 1.0);
    init.add({2, 3}, 1.0);
    const RngStream rng(77, 3);
    const auto s = simulate_batch(sim, init, cfg, rng, ExecPolicy::serial);
    const int saved = max_threads();
    set_threads(4);
    const auto p = simulate_batch(sim, init, cfg, rng, ExecPolicy::parallel);
    set_threads(saved);
    REQUIRE(s.trajectories.size() == p.trajectories.size());
    for (std::size_t i = 0; i < s.trajectories.size(); ++i) CHECK(s.trajectories[i].states == p.trajectories[i].states);
    SimBatchConfig small = cfg;
    small.n_trajectories = 50;
    const auto t = simulate_batch(sim, init, small, rng, ExecPolicy::serial);
    for (std::size_t i = 0; i < 50; ++i) CHECK(t.trajectories[i].states == s.trajectories[i].states);
    std::size_t visited = 0;
    for_each_trajectory(sim, init, cfg, rng,
                        [&](std::uint64_t i, const Trajectory<DiscreteState>& tr) {
                            CHECK(tr.states == s.trajectories[i].states);
                            ++visited;
                        },
                        ExecPolicy::parallel, 64);
    CHECK(visited == 300);
}

TEST_CASE("batch driver rejects initial laws charging the boundary") {
    CoinFlipSim sim;
    SimBatchConfig cfg;
    cfg.record_grid = {0.0, 1.0, 2};
    cfg.horizon = 2.0;
    EmpiricalMeasure<DiscreteState> init;
    init.add({0, 1}, 1.0);
    CHECK_THROWS_AS(simulate_batch(sim, init, cfg, RngStream(1, 0)), PreconditionError);
}

TEST_CASE("csv rendering is round-trip exact") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    TrajectoryBatch<DiscreteState> b;
    b.dimension = 2;
    b.config.record_grid = {0.0, 0.5, 1};
    Trajectory<DiscreteState> tr;
    tr.states = {{1, 2}, {0, 2}};
    b.trajectories.push_back(tr);
    std::ostringstream os;
    write_batch_csv(b, os);
    CHECK(os.str() == "trajectory_id,grid_index,time,coord_0,coord_1,absorbed_flag\n0,0,0,1,2,0\n0,1,0.5,0,2,1\n");
}
