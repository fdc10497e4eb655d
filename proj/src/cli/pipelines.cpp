#include "qsdlab/cli/pipelines.hpp"

#include "qsdlab/bd/pnm.hpp"
#include "qsdlab/bd/truncation.hpp"
#include "qsdlab/core/io.hpp"
#include "qsdlab/feller/conditions.hpp"
#include "qsdlab/lyapunov/checks.hpp"
#include "qsdlab/lyapunov/dynkin.hpp"
#include "qsdlab/lyapunov/pair.hpp"
#include "qsdlab/qsd/conditioned.hpp"
#include "qsdlab/qsd/convergence.hpp"
#include "qsdlab/qsd/fleming_viot.hpp"
#include "qsdlab/qsd/oracle.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace qsdlab::cli {

namespace {

bd::BDModel reference_chain() {
    return bd::BDModel::lotka_volterra({{1, 1}, {1, 1}, {{0, 0}, {0, 0}}, {{1, 0.2}, {0.2, 1}}});
}

feller::FellerModel reference_feller() {
    return feller::FellerModel::lotka_volterra({2, 2}, feller::FellerLV{{1, 1}, {{1, 0}, {0, 1}}, 0.0});
}

constexpr Count kSliceLo = 2, kSliceHi = 200;

struct BDSetup {
    double eta = 0.0;
    lyap::CheckCertificate assumption;
    bd::BDParamSelection selection;
};

BDSetup bd_setup(const bd::BDModel& m, ExecPolicy policy) {
    BDSetup s;
    const auto eta = bd::auto_eta(m, kSliceLo, kSliceHi, policy);
    if (!eta) throw NumericalError("reference chain: no eta passes the assumption check");
    s.eta = eta->eta;
    s.assumption = eta->certificate;
    s.selection = bd::select_bd_params(m, s.eta, kSliceLo, kSliceHi, policy);
    return s;
}

std::vector<DiscreteState> box_states(Count side) {
    std::vector<DiscreteState> out;
    for (Count a = 1; a <= side; ++a)
        for (Count b = 1; b <= side; ++b) out.push_back({a, b});
    return out;
}

std::string fmt(double x, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << x;
    return os.str();
}

std::string certificate_csv(const std::vector<lyap::CheckCertificate>& certs) {
    std::ostringstream os;
    os << "check,verdict,key,value\n";
    for (const auto& c : certs) {
        os << c.check << ',' << lyap::to_string(c.verdict) << ",counterexamples," << c.counterexamples.size() << '\n';
        for (const auto& [k, v] : c.witnesses) os << c.check << ',' << lyap::to_string(c.verdict) << ',' << k << ',' << format_double(v) << '\n';
    }
    return os.str();
}

template <class F>
CriterionResult timed(int id, std::string title, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    r.id = id;
    r.title = std::move(title);
    try {
        body(r);
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

bool overlap(const Interval& a, const Interval& b) { return a.lo <= b.hi && b.lo <= a.hi; }

std::string report_csv(const qsd::ConvergenceReport& rep) {
    std::ostringstream os;
    rep.write_csv(os);
    return os.str();
}

template <class State>
std::string measure_csv(const EmpiricalMeasure<State>& m) {
    std::ostringstream os;
    qsd::write_measure_csv(m, os);
    return os.str();
}

} // namespace

CriterionResult criterion_construction(const PipelineOptions& opt) {
    return timed(1, "h_beta construction suite", [&](CriterionResult& r) {
        RngStream g(opt.seed, 100);
        std::ostringstream csv;
        csv << "pair,a,B_a,beta,junction_mismatch,p2_at_a_error,shape_violations\n";
        double worst_mismatch = 0.0, worst_p2 = 0.0;
        long violations = 0;
        for (int pair = 0; pair < 20; ++pair) {
            const double a = 0.2 + 3.0 * g.uniform();
            const feller::FellerAssumptionParams p{a, 0.5, a * (1.05 + 3.0 * g.uniform()), 1.0, 1.0};
            const feller::MConstants m = feller::compute_M(p);
            for (int k = 0; k < 5; ++k) {
                const double beta = k == 0 ? m.M : m.M + 30.0 * g.uniform();
                const feller::HBetaFunction h = feller::build_h_beta(p, beta, m);
                const double mismatch = h.junction_mismatch();
                const double p2 = std::abs(h.p2(p.a).v - 1.0);
                long bad = 0;
                double prev = h.value(p.a);
                for (int i = 1; i < 10000; ++i) {
                    const double x = p.a + (4.0 * p.B_a - p.a) * i / 9999.0;
                    const feller::Jet j = h(x);
                    bad += j.d1 > 0.0 || j.d2 < 0.0 || j.v > prev;
                    prev = j.v;
                }
                for (int i = 0; i < 10000; ++i) {
                    const double x = p.a * (0.5 + 0.5 * i / 9999.0);
                    bad += h.value(x) < 1.0 - 1e-14;
                }
                for (int i = 1; i < 10000; ++i) {
                    const double x = 0.5 * p.a * i / 9999.0;
                    const feller::Jet j = h(x);
                    bad += j.d1 < 0.0 || j.d2 < 0.0;
                }
                worst_mismatch = std::max(worst_mismatch, mismatch);
                worst_p2 = std::max(worst_p2, p2);
                violations += bad;
                csv << pair << ',' << format_double(p.a) << ',' << format_double(p.B_a) << ',' << format_double(beta)
                    << ',' << format_double(mismatch) << ',' << format_double(p2) << ',' << bad << '\n';
            }
        }
        // a handful of rounding steps separate P2(a) from 1
        const double machine = 8.0 * std::numeric_limits<double>::epsilon();
        r.pass = worst_mismatch <= 1e-9 && worst_p2 <= machine && violations == 0;
        r.metrics = {{"worst_junction_mismatch", worst_mismatch},
                     {"worst_p2_error", worst_p2},
                     {"shape_violations", violations}};
        r.detail = "100 functions, max junction mismatch " + fmt(worst_mismatch) + ", max |P2(a)-1| " +
                   fmt(worst_p2) + ", shape violations " + std::to_string(violations);
        r.artifacts.push_back({"construction.csv", csv.str()});
    });
}

CriterionResult criterion_bd_conditions(const PipelineOptions& opt) {
    return timed(2, "birth-death assumption and conditions (a), (b)", [&](CriterionResult& r) {
        const auto m = reference_chain();
        const BDSetup s = bd_setup(m, opt.policy);
        const auto a = bd::check_bd_condition_a(m, s.selection.params, kSliceLo, kSliceHi, opt.policy);
        const auto b = bd::check_bd_condition_b(m, s.selection.params, kSliceLo, kSliceHi, 1.0, opt.policy);
        const auto ce = [](const lyap::CheckCertificate& c) { return c.counterexamples.size(); };
        r.pass = s.assumption.holds() && a.holds() && b.holds() && ce(a) == 0 && ce(b) == 0;
        r.metrics = {{"eta", s.eta},
                     {"params", s.selection.params.to_json()},
                     {"assumption", s.assumption.to_json()},
                     {"condition_a", a.to_json()},
                     {"condition_b", b.to_json()}};
        std::string ks = a.witnesses.count("k_star") ? fmt(a.witnesses.at("k_star")) : "?";
        std::string ms = b.witnesses.count("m_star") ? fmt(b.witnesses.at("m_star")) : "?";
        r.detail = "eta " + fmt(s.eta) + ", beta " + fmt(s.selection.params.beta) + "; assumption " +
                   std::string(lyap::to_string(s.assumption.verdict)) + ", (a) " +
                   std::string(lyap::to_string(a.verdict)) + " k*=" + ks + ", (b) " +
                   std::string(lyap::to_string(b.verdict)) + " m*=" + ms;
        r.artifacts.push_back({"bd_certificates.csv", certificate_csv({s.assumption, a, b})});
        std::ostringstream st;
        st << "k,dbar,dunder\n";
        for (const auto& x : bd::slice_stats_range(m, kSliceLo, kSliceHi, opt.policy))
            st << x.k << ',' << format_double(x.dbar) << ',' << format_double(x.dunder) << '\n';
        r.artifacts.push_back({"slice_stats.csv", st.str()});
    });
}

CriterionResult criterion_dynkin(const PipelineOptions& opt) {
    return timed(3, "conditioned Dynkin identity", [&](CriterionResult& r) {
        const auto m = reference_chain();
        const BDSetup s = bd_setup(m, opt.policy);
        const auto pair = lyap::make_bd_pair(m, s.selection.params);
        bd::Truncation tr(m, {15, 15});
        const TimeGrid grid{0.0, 0.1, 50};
        const DiscreteState x{1, 1};
        const auto coarse = lyap::verify_dynkin_identity(tr, pair, x, grid, 1e-3, opt.policy);
        const auto fine = lyap::verify_dynkin_identity(tr, pair, x, grid, 5e-4, opt.policy);
        const double ratio = coarse.max_residual / fine.max_residual;
        r.pass = coarse.max_residual <= 1e-6 && ratio >= 3.5;
        r.metrics = {{"max_residual", coarse.max_residual}, {"max_residual_half_step", fine.max_residual},
                     {"halving_ratio", ratio}};
        r.detail = "max residual " + fmt(coarse.max_residual) + " (gate 1e-6), halving ratio " + fmt(ratio) +
                   " (gate 3.5)";
        std::ostringstream os;
        os << "t,lhs,rhs,residual,residual_half_step\n";
        for (std::size_t i = 0; i < coarse.t.size(); ++i)
            os << format_double(coarse.t[i]) << ',' << format_double(coarse.lhs[i]) << ','
               << format_double(coarse.rhs[i]) << ',' << format_double(coarse.residual[i]) << ','
               << format_double(fine.residual[i]) << '\n';
        r.artifacts.push_back({"dynkin.csv", os.str()});
    });
}

CriterionResult criterion_bd_qsd(const PipelineOptions& opt) {
    return timed(4, "birth-death QSD and uniform convergence", [&](CriterionResult& r) {
        const auto m = reference_chain();
        const auto o = qsd::qsd_eigen_oracle_auto(m, {10, 10}, 1e-6, 400, 1e-12, opt.policy);
        bd::Truncation tr(m, o.box);
        const auto nu = qsd::box_measure(tr, o.nu).normalized();
        bd::BDSimulator sim(m);

        qsd::FVConfig fv;
        fv.n_particles = 2000;
        fv.horizon = 50.0;
        const auto est = qsd::fleming_viot(sim, EmpiricalMeasure<DiscreteState>::dirac({1, 1}), fv,
                                           RngStream(opt.seed, 400), opt.policy);
        const double tv_fv = tv_distance(est.measure, nu);

        const TimeGrid grid{0.0, 0.02, 150};
        const auto A = qsd::conditioned_mc(sim, EmpiricalMeasure<DiscreteState>::dirac({1, 1}), grid,
                                           opt.mc_trajectories, RngStream(opt.seed, 401), opt.policy);
        const auto B = qsd::conditioned_mc(sim, EmpiricalMeasure<DiscreteState>::dirac({30, 30}), grid,
                                           opt.mc_trajectories, RngStream(opt.seed, 402), opt.policy);
        const auto ra = qsd::convergence_to_measure(A, nu, 0, "eigen_oracle");
        const auto rb = qsd::convergence_to_measure(B, nu, 0, "eigen_oracle");
        const auto rab = qsd::convergence_between(A, B, "start_30_30");

        const bool fits = ra.fit && rb.fit;
        const bool r2 = fits && ra.fit->r_squared >= 0.95 && rb.fit->r_squared >= 0.95;
        const bool positive = fits && ra.fit->rate_ci.lo > 0.0 && rb.fit->rate_ci.lo > 0.0;
        const bool agree = fits && overlap(ra.fit->rate_ci, rb.fit->rate_ci);
        const double l0_err = ra.lambda0 ? std::abs(ra.lambda0->rate - o.lambda0) / o.lambda0 : 1.0;
        r.pass = tv_fv <= 0.05 && r2 && positive && agree && ra.lambda0 && l0_err <= 0.05;

        r.metrics = {{"oracle", o.to_json()},
                     {"fleming_viot", est.summary()},
                     {"tv_fleming_viot_oracle", tv_fv},
                     {"curve_1_1", ra.summary()},
                     {"curve_30_30", rb.summary()},
                     {"curve_between", rab.summary()},
                     {"lambda0_relative_error", l0_err}};
        auto rate = [](const qsd::ConvergenceReport& x) {
            return x.fit ? fmt(x.fit->rate, 3) + " [" + fmt(x.fit->rate_ci.lo, 3) + ", " + fmt(x.fit->rate_ci.hi, 3) +
                               "] R2 " + fmt(x.fit->r_squared, 3)
                         : "no fit (" + x.fit_error + ")";
        };
        r.detail = "TV(FV, oracle) " + fmt(tv_fv, 3) + "; rate (1,1) " + rate(ra) + "; rate (30,30) " + rate(rb) +
                   (agree ? " (CIs overlap)" : " (CIs disjoint)") + "; lambda0 " +
                   (ra.lambda0 ? fmt(ra.lambda0->rate) : std::string("n/a")) + " vs oracle " + fmt(o.lambda0) +
                   " (" + fmt(100.0 * l0_err, 2) + "%)";
        r.artifacts.push_back({"qsd_eigen_oracle.csv", measure_csv(nu)});
        r.artifacts.push_back({"qsd_fleming_viot.csv", measure_csv(est.measure)});
        r.artifacts.push_back({"tv_1_1.csv", report_csv(ra)});
        r.artifacts.push_back({"tv_30_30.csv", report_csv(rb)});
        r.artifacts.push_back({"tv_between.csv", report_csv(rab)});
    });
}

CriterionResult criterion_feller_qsd(const PipelineOptions& opt) {
    return timed(5, "Feller QSD and uniform convergence", [&](CriterionResult& r) {
        const auto m = reference_feller();
        const auto setup = feller::auto_feller_setup(m);
        const auto cond = feller::check_feller_condition_report(setup.pair, setup.params, setup.epsilon,
                                                                feller::default_grid(setup.params, 2), 1e-10,
                                                                opt.policy);

        std::vector<qsd::QSDEstimate<ContinuousState>> fv;
        for (double dt : {1e-3, 5e-4}) {
            feller::FellerScheme sc;
            sc.dt = dt;
            feller::FellerSimulator sim(m, sc);
            qsd::FVConfig cfg;
            cfg.n_particles = 2000;
            cfg.horizon = 40.0;
            cfg.snapshot_every = 4;
            fv.push_back(qsd::fleming_viot(sim, EmpiricalMeasure<ContinuousState>::dirac({1.0, 1.0}), cfg,
                                           RngStream(opt.seed, 500), opt.policy));
        }
        const BinGrid bins = BinGrid::from_quantiles({&fv[0].measure, &fv[1].measure}, 10);
        const auto b0 = bin(fv[0].measure, bins), b1 = bin(fv[1].measure, bins);
        const double dt_tv = tv_distance(b0, b1);

        feller::FellerSimulator sim(m, feller::FellerScheme{});
        const TimeGrid grid{0.0, 0.02, 150};
        std::vector<qsd::ConvergenceReport> reps;
        std::uint64_t stream = 501;
        for (double x : {0.5, 3.0}) {
            const auto laws = qsd::conditioned_mc(sim, EmpiricalMeasure<ContinuousState>::dirac({x, x}), grid,
                                                  opt.mc_trajectories, RngStream(opt.seed, stream++), opt.policy);
            // the dt-halving discrepancy bounds the error of the FV reference
            reps.push_back(qsd::convergence_to_measure(qsd::bin_laws(laws, bins), b0.cells, 0, "fleming_viot", dt_tv));
        }
        const auto& ra = reps[0];
        const auto& rb = reps[1];
        const bool fits = ra.fit && rb.fit;
        const bool r2 = fits && ra.fit->r_squared >= 0.9 && rb.fit->r_squared >= 0.9;
        const bool positive = fits && ra.fit->rate_ci.lo > 0.0 && rb.fit->rate_ci.lo > 0.0;
        const bool agree = fits && overlap(ra.fit->rate_ci, rb.fit->rate_ci);
        r.pass = cond.condition_a.holds() && cond.condition_b.holds() && dt_tv <= 0.08 && r2 && positive && agree;

        r.metrics = {{"condition_a", cond.condition_a.to_json()},
                     {"condition_b", cond.condition_b.to_json()},
                     {"fleming_viot_dt_1e-3", fv[0].summary()},
                     {"fleming_viot_dt_5e-4", fv[1].summary()},
                     {"binned_tv_dt_halving", dt_tv},
                     {"curve_0.5", ra.summary()},
                     {"curve_3", rb.summary()}};
        auto rate = [](const qsd::ConvergenceReport& x) {
            return x.fit ? fmt(x.fit->rate, 3) + " [" + fmt(x.fit->rate_ci.lo, 3) + ", " + fmt(x.fit->rate_ci.hi, 3) +
                               "] R2 " + fmt(x.fit->r_squared, 3)
                         : "no fit (" + x.fit_error + ")";
        };
        r.detail = "(a) " + std::string(lyap::to_string(cond.condition_a.verdict)) + ", (b) " +
                   std::string(lyap::to_string(cond.condition_b.verdict)) + "; binned TV under dt halving " +
                   fmt(dt_tv, 3) + "; rate (0.5,0.5) " + rate(ra) + "; rate (3,3) " + rate(rb) +
                   (agree ? " (CIs overlap)" : " (CIs disjoint)");
        r.artifacts.push_back({"feller_certificates.csv", certificate_csv({cond.condition_a, cond.condition_b})});
        r.artifacts.push_back({"feller_qsd_binned.csv", measure_csv(b0.cells)});
        r.artifacts.push_back({"feller_qsd_binned_half_dt.csv", measure_csv(b1.cells)});
        r.artifacts.push_back({"feller_tv_0.5.csv", report_csv(ra)});
        r.artifacts.push_back({"feller_tv_3.csv", report_csv(rb)});
    });
}

CriterionResult criterion_comparison(const PipelineOptions& opt) {
    return timed(6, "pathwise comparison with the upper diffusions", [&](CriterionResult& r) {
        const auto m = reference_feller();
        const auto p = feller::auto_assumption_params(m);
        const auto rep = feller::compare_with_upper_diffusions(m, p.a, p.eta, {1.0, 1.0}, 5.0, feller::FellerScheme{},
                                                               1000, RngStream(opt.seed, 600), opt.policy);
        r.pass = rep.paths == 1000 && rep.steps_checked > 0 && rep.upper_violations == 0 &&
                 rep.logistic_violations == 0;
        r.metrics = {{"paths", rep.paths},
                     {"steps_checked", rep.steps_checked},
                     {"upper_violations", rep.upper_violations},
                     {"logistic_violations", rep.logistic_violations},
                     {"worst_upper_excess", rep.worst_upper_excess},
                     {"worst_logistic_excess", rep.worst_logistic_excess}};
        r.detail = std::to_string(rep.paths) + " paths, " + std::to_string(rep.steps_checked) + " checks, " +
                   std::to_string(rep.upper_violations) + " upper and " + std::to_string(rep.logistic_violations) +
                   " logistic violations";
        std::ostringstream os;
        os << "paths,steps_checked,upper_violations,logistic_violations,worst_upper_excess,worst_logistic_excess\n"
           << rep.paths << ',' << rep.steps_checked << ',' << rep.upper_violations << ',' << rep.logistic_violations
           << ',' << format_double(rep.worst_upper_excess) << ',' << format_double(rep.worst_logistic_excess) << '\n';
        r.artifacts.push_back({"comparison.csv", os.str()});
    });
}

CriterionResult criterion_nonlinear(const PipelineOptions& opt) {
    return timed(7, "nonlinear Lyapunov inequality on measures", [&](CriterionResult& r) {
        const auto m = reference_chain();
        const BDSetup s = bd_setup(m, opt.policy);
        const auto pair = lyap::make_bd_pair(m, s.selection.params);
        const auto measures = lyap::sample_mixture_measures(box_states(15), 500, RngStream(opt.seed, 700));
        const auto rep = lyap::check_nonlinear_inequality(pair, measures, s.selection.params.epsilon, opt.policy);
        const double violations = rep.certificate.witnesses.count("violations")
                                      ? rep.certificate.witnesses.at("violations")
                                      : static_cast<double>(rep.certificate.counterexamples.size());
        r.pass = rep.certificate.holds() && violations == 0.0 && rep.rows.size() == 500;
        r.metrics = {{"A", rep.fitted.A}, {"B", rep.fitted.B}, {"certificate", rep.certificate.to_json()}};
        r.detail = std::to_string(rep.rows.size()) + " measures, fitted A " + fmt(rep.fitted.A) + ", B " +
                   fmt(rep.fitted.B) + ", violations " + fmt(violations);
        std::ostringstream os;
        os << "lhs,mu_phi,feature,bound\n";
        for (const auto& x : rep.rows)
            os << format_double(x.lhs) << ',' << format_double(x.mu_phi) << ',' << format_double(x.feature) << ','
               << format_double(rep.fitted.A * x.mu_phi - rep.fitted.B * x.feature) << '\n';
        r.artifacts.push_back({"nonlinear.csv", os.str()});
    });
}

CriterionResult criterion_fixed_point(const PipelineOptions& opt) {
    return timed(8, "QSD fixed point under the exact semigroup", [&](CriterionResult& r) {
        const auto m = reference_chain();
        const auto o = qsd::qsd_eigen_oracle_auto(m, {10, 10}, 1e-6, 400, 1e-12, opt.policy);
        bd::Truncation tr(m, o.box);
        double worst = 0.0;
        std::ostringstream os;
        os << "t,tv\n";
        for (double t : {0.5, 1.0, 2.0}) {
            const double tv = qsd::tv_box(qsd::propagate_conditioned(tr, o.nu, t, opt.policy), o.nu);
            worst = std::max(worst, tv);
            os << format_double(t) << ',' << format_double(tv) << '\n';
        }
        r.pass = worst <= 1e-8;
        r.metrics = {{"max_tv", worst}, {"box", o.box}, {"residual", o.residual}};
        r.detail = "box " + std::to_string(o.box[0]) + "x" + std::to_string(o.box[1]) + ", max TV " + fmt(worst) +
                   " (gate 1e-8)";
        r.artifacts.push_back({"fixed_point.csv", os.str()});
    });
}

const std::vector<std::pair<int, CriterionFn>>& all_criteria() {
    static const std::vector<std::pair<int, CriterionFn>> table{
        {1, criterion_construction}, {2, criterion_bd_conditions}, {3, criterion_dynkin},
        {4, criterion_bd_qsd},       {5, criterion_feller_qsd},    {6, criterion_comparison},
        {7, criterion_nonlinear},    {8, criterion_fixed_point}};
    return table;
}

namespace {

std::vector<CriterionResult> run_ids(const PipelineOptions& opt, std::initializer_list<int> ids) {
    std::vector<CriterionResult> out;
    for (int id : ids)
        for (const auto& [k, fn] : all_criteria())
            if (k == id) out.push_back(fn(opt));
    return out;
}

} // namespace

std::vector<CriterionResult> reproduce_thm_3_2(const PipelineOptions& opt) { return run_ids(opt, {2, 3, 4, 7, 8}); }

std::vector<CriterionResult> reproduce_thm_4_2(const PipelineOptions& opt) { return run_ids(opt, {1, 5, 6}); }

void print_table(std::ostream& os, const std::vector<CriterionResult>& results) {
    for (const auto& r : results)
        os << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << ' ' << r.title << " (" << std::fixed
           << std::setprecision(1) << r.seconds << " s): " << std::defaultfloat << r.detail << '\n';
}

} // namespace qsdlab::cli
