// Serial vs parallel timings for the hot kernels. Arg 0 = serial, 1 = parallel.
#include "qsdlab/bd/model.hpp"
#include "qsdlab/bd/pnm.hpp"
#include "qsdlab/bd/truncation.hpp"
#include "qsdlab/qsd/conditioned.hpp"
#include "qsdlab/qsd/fleming_viot.hpp"

#include <benchmark/benchmark.h>

using namespace qsdlab;

namespace {

const bd::BDModel& chain() {
    static const bd::BDModel m =
        bd::BDModel::lotka_volterra({{1, 1}, {1, 1}, {{0, 0}, {0, 0}}, {{1, 0.2}, {0.2, 1}}});
    return m;
}

ExecPolicy policy_of(const benchmark::State& s) { return s.range(0) ? ExecPolicy::parallel : ExecPolicy::serial; }

void label(benchmark::State& s) { s.SetLabel(s.range(0) ? "parallel" : "serial"); }

void BM_apply_left(benchmark::State& s) {
    const bd::Truncation tr(chain(), {120, 120});
    std::vector<double> p(tr.size(), 1.0 / static_cast<double>(tr.size())), out(tr.size());
    for (auto _ : s) {
        tr.apply_left(p, out, policy_of(s));
        benchmark::DoNotOptimize(out.data());
    }
    label(s);
}
BENCHMARK(BM_apply_left)->Arg(0)->Arg(1);

void BM_propagate_left(benchmark::State& s) {
    const bd::Truncation tr(chain(), {30, 30});
    std::vector<double> p(tr.size(), 0.0);
    p[0] = 1.0;
    for (auto _ : s) benchmark::DoNotOptimize(tr.propagate_left(p, 2.0, policy_of(s)));
    label(s);
}
BENCHMARK(BM_propagate_left)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_slice_stats(benchmark::State& s) {
    for (auto _ : s) benchmark::DoNotOptimize(bd::slice_stats_range(chain(), 2, 400, policy_of(s)));
    label(s);
}
BENCHMARK(BM_slice_stats)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_conditioned_mc(benchmark::State& s) {
    const bd::BDSimulator sim(chain());
    const auto init = EmpiricalMeasure<DiscreteState>::dirac({2, 2});
    for (auto _ : s)
        benchmark::DoNotOptimize(
            qsd::conditioned_mc(sim, init, TimeGrid{0.0, 0.1, 10}, 5000, RngStream(1, 0), policy_of(s)));
    label(s);
}
BENCHMARK(BM_conditioned_mc)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_fleming_viot(benchmark::State& s) {
    const bd::BDSimulator sim(chain());
    qsd::FVConfig cfg;
    cfg.n_particles = 500;
    cfg.horizon = 5.0;
    for (auto _ : s)
        benchmark::DoNotOptimize(qsd::fleming_viot(sim, EmpiricalMeasure<DiscreteState>::dirac({1, 1}), cfg,
                                                   RngStream(2, 0), policy_of(s)));
    label(s);
}
BENCHMARK(BM_fleming_viot)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
