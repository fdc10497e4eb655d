#pragma once

#include "qsdlab/core/batch.hpp"
#include "qsdlab/core/error.hpp"
#include "qsdlab/core/measure.hpp"
#include "qsdlab/core/parallel.hpp"
#include "qsdlab/core/stats.hpp"
#include "qsdlab/qsd/estimate.hpp"

#include <cmath>
#include <map>
#include <type_traits>
#include <vector>

namespace qsdlab::qsd {

struct FVConfig {
    std::size_t n_particles = 2000;
    double horizon = 50.0;
    double dt_sync = 0.05;
    std::size_t snapshot_every = 1;        // epochs between samples of the averaged measure
    std::size_t max_resamples = 10'000;    // per particle and epoch
    std::size_t rate_batches = 10;         // batch means for the lambda0 interval

    void validate() const {
        require(n_particles >= 100, "FVConfig: need at least 100 particles");
        require(dt_sync > 0.0 && horizon >= 2.0 * dt_sync, "FVConfig: horizon must cover two epochs");
        require(snapshot_every >= 1, "FVConfig: snapshot_every must be >= 1");
        require(max_resamples >= 1, "FVConfig: max_resamples must be >= 1");
        require(rate_batches >= 2, "FVConfig: need at least two rate batches");
    }

    nlohmann::json to_json() const {
        return {{"n_particles", n_particles}, {"horizon", horizon},         {"dt_sync", dt_sync},
                {"snapshot_every", snapshot_every}, {"rate_batches", rate_batches}};
    }
};

/// Fleming-Viot particle system. Particles advance independently over
/// synchronized epochs of length dt_sync (particle i in epoch e uses
/// rng.child(e + 1).child(i); initial draws use rng.child(0).child(i)). A
/// particle absorbed inside an epoch restarts, for the rest of the epoch, from
/// the epoch-start position of a uniformly chosen other particle, so results do
/// not depend on scheduling. The first half of the epochs is burn-in; the
/// estimate averages the particle cloud at epoch ends over the second half and
/// lambda0 = resampling events / (n_particles x averaging window), with a
/// Student t interval from batch means.
///
/// `Sim` needs dimension() and double advance(State&, double, RngStream&),
/// returning the elapsed time (shorter than asked only on absorption).
template <class Sim>
QSDEstimate<typename Sim::State> fleming_viot(const Sim& sim, const EmpiricalMeasure<typename Sim::State>& init,
                                              const FVConfig& cfg, const RngStream& rng,
                                              ExecPolicy policy = ExecPolicy::parallel) {
    using State = typename Sim::State;
    constexpr bool discrete = std::is_same_v<State, DiscreteState>;
    cfg.validate();
    require_alive_support(init, sim.dimension());
    const std::size_t n = cfg.n_particles;
    const auto n_epochs = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt_sync));
    const std::size_t burn = n_epochs / 2;
    const std::size_t kept = n_epochs - burn;
    require(kept >= cfg.rate_batches, "fleming_viot: fewer averaging epochs than rate batches");

    std::vector<State> particles(n);
    {
        const MeasureSampler<State> sampler(init);
        const RngStream base = rng.child(0);
        for (std::size_t i = 0; i < n; ++i) {
            RngStream s = base.child(i);
            particles[i] = sampler.draw(s);
        }
    }
    std::vector<State> snapshot;
    std::vector<std::size_t> resamples(n);
    std::vector<unsigned char> overflow(n);
    std::map<State, double> counts;
    EmpiricalMeasure<State> raw;
    std::vector<double> batch_events(cfg.rate_batches, 0.0), batch_epochs(cfg.rate_batches, 0.0);
    std::size_t total_events = 0, snapshots = 0;

    for (std::size_t e = 0; e < n_epochs; ++e) {
        snapshot = particles;
        const RngStream epoch = rng.child(e + 1);
        parallel_for(policy, static_cast<std::int64_t>(n), [&](std::int64_t k) {
            const auto i = static_cast<std::size_t>(k);
            RngStream s = epoch.child(i);
            State x = particles[i];
            double remaining = cfg.dt_sync;
            std::size_t jumps = 0;
            while (remaining > 0.0) {
                const double elapsed = sim.advance(x, remaining, s);
                if (!x.absorbed()) break;
                if (++jumps > cfg.max_resamples) {
                    overflow[i] = 1;
                    break;
                }
                std::uint64_t j = s.below(n - 1);
                if (j >= i) ++j;
                x = snapshot[j];
                remaining -= elapsed;
            }
            particles[i] = std::move(x);
            resamples[i] = jumps;
        });
        for (std::size_t i = 0; i < n; ++i)
            if (overflow[i])
                throw NumericalError("fleming_viot: particle " + std::to_string(i) + " absorbed more than " +
                                     std::to_string(cfg.max_resamples) +
                                     " times in one epoch; restart with a smaller step");
        if (e < burn) continue;
        std::size_t ev = 0;
        for (std::size_t r : resamples) ev += r;
        total_events += ev;
        const std::size_t b = (e - burn) * cfg.rate_batches / kept;
        batch_events[b] += static_cast<double>(ev);
        batch_epochs[b] += 1.0;
        if ((e - burn) % cfg.snapshot_every == 0) {
            ++snapshots;
            for (const auto& x : particles) {
                if constexpr (discrete) {
                    counts[x] += 1.0;
                } else {
                    raw.add(x, 1.0);
                }
            }
        }
    }

    QSDEstimate<State> est;
    est.method = Method::fleming_viot;
    if constexpr (discrete) {
        EmpiricalMeasure<State> m;
        m.reserve(counts.size());
        for (const auto& [s, c] : counts) m.add(s, c);
        est.measure = m.normalized();
    } else {
        est.measure = raw.normalized();
    }
    const double window = static_cast<double>(kept) * cfg.dt_sync;
    const double nd = static_cast<double>(n);
    est.lambda0 = static_cast<double>(total_events) / (nd * window);
    std::vector<double> rates;
    for (std::size_t b = 0; b < cfg.rate_batches; ++b)
        rates.push_back(batch_events[b] / (nd * batch_epochs[b] * cfg.dt_sync));
    double mean = 0.0, var = 0.0;
    for (double r : rates) mean += r;
    mean /= static_cast<double>(rates.size());
    for (double r : rates) var += (r - mean) * (r - mean);
    var /= static_cast<double>(rates.size() - 1);
    const double half =
        student_t_quantile(0.975, static_cast<double>(rates.size() - 1)) * std::sqrt(var / static_cast<double>(rates.size()));
    est.lambda0_ci = {std::max(0.0, est.lambda0 - half), est.lambda0 + half};
    est.diagnostics = cfg.to_json();
    est.diagnostics["burn_in"] = static_cast<double>(burn) * cfg.dt_sync;
    est.diagnostics["averaging_window"] = window;
    est.diagnostics["resampling_events"] = total_events;
    est.diagnostics["snapshots"] = snapshots;
    return est;
}

} // namespace qsdlab::qsd
