#include "qsdlab/cli/runner.hpp"

#include "qsdlab/bd/pnm.hpp"
#include "qsdlab/bd/truncation.hpp"
#include "qsdlab/cli/pipelines.hpp"
#include "qsdlab/core/io.hpp"
#include "qsdlab/feller/assumption.hpp"
#include "qsdlab/feller/conditions.hpp"
#include "qsdlab/lyapunov/checks.hpp"
#include "qsdlab/lyapunov/pair.hpp"
#include "qsdlab/qsd/conditioned.hpp"
#include "qsdlab/qsd/convergence.hpp"
#include "qsdlab/qsd/eta.hpp"
#include "qsdlab/qsd/fleming_viot.hpp"
#include "qsdlab/qsd/oracle.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>

#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace qsdlab::cli {

using nlohmann::json;

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

json csv_to_json(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ls(s);
        while (std::getline(ls, cell, ',')) out.push_back(cell);
        if (!s.empty() && s.back() == ',') out.emplace_back();
        return out;
    };
    json j;
    std::getline(in, line);
    j["columns"] = split(line);
    j["rows"] = json::array();
    while (std::getline(in, line)) {
        json row = json::array();
        for (const auto& c : split(line)) {
            json v = json::parse(c, nullptr, false);
            row.push_back(v.is_discarded() || !v.is_number() ? json(c) : v);
        }
        j["rows"].push_back(std::move(row));
    }
    return j;
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json versions() {
    return {{"qsdlab", "0.1.0"},
            {"compiler", __VERSION__},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"openmp", _OPENMP}};
}

/// Single owner of the output directory.
class ArtifactWriter {
public:
    ArtifactWriter(std::filesystem::path dir, std::string format) : dir_(std::move(dir)), format_(std::move(format)) {}

    void table(const std::string& stem, const std::string& csv) {
        if (format_ == "json")
            put(stem + ".json", csv_to_json(csv).dump(2) + "\n");
        else
            put(stem + ".csv", csv);
    }
    void document(const std::string& name, const json& j) { put(name, j.dump(2) + "\n"); }

    const json& listing() const { return listing_; }
    std::size_t count() const { return listing_.size(); }
    const std::filesystem::path& dir() const { return dir_; }

    void manifest(json m) {
        m["artifacts"] = listing_;
        write_text_file(dir_ / "manifest.json", m.dump(2) + "\n");
    }

private:
    void put(const std::string& name, const std::string& body) {
        write_text_file(dir_ / name, body);
        listing_.push_back({{"name", name}, {"bytes", body.size()}, {"fnv1a64", fnv1a_hex(body)}});
    }

    std::filesystem::path dir_;
    std::string format_;
    json listing_ = json::array();
};

template <class State>
std::string measure_csv(const EmpiricalMeasure<State>& m) {
    std::ostringstream os;
    qsd::write_measure_csv(m, os);
    return os.str();
}

std::string report_csv(const qsd::ConvergenceReport& rep) {
    std::ostringstream os;
    rep.write_csv(os);
    return os.str();
}

template <class State>
std::string eta_csv(const std::vector<qsd::EtaRow<State>>& rows) {
    std::ostringstream os;
    os << "state,t,rescaled_survival\n";
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.t.size(); ++i)
            os << '"' << to_string(r.start) << '"' << ',' << format_double(r.t[i]) << ',' << format_double(r.curve[i])
               << '\n';
    return os.str();
}

template <class State>
json eta_json(const std::vector<qsd::EtaRow<State>>& rows, const std::vector<double>* oracle_eta,
              const bd::Truncation* tr) {
    json out = json::array();
    for (const auto& r : rows) {
        json j{{"state", as_doubles(r.start)}, {"plateau", r.plateau}, {"plateau_range", {r.plateau_lo, r.plateau_hi}},
               {"drift", r.drift}, {"truncated", r.truncated}};
        if constexpr (std::is_same_v<State, DiscreteState>) {
            if (oracle_eta && tr) {
                const auto idx = tr->index_of(r.start);
                if (idx) j["oracle_eta"] = (*oracle_eta)[*idx];
            }
        }
        out.push_back(std::move(j));
    }
    return out;
}

std::string box_text(const std::vector<Count>& box) {
    std::string s;
    for (std::size_t i = 0; i < box.size(); ++i) s += (i ? "x" : "") + std::to_string(box[i]);
    return s;
}

std::string verdict_line(const lyap::CheckCertificate& c) {
    return "check " + c.check + ": " + std::string(lyap::to_string(c.verdict)) + " (" + c.qualifier + ")";
}

lyap::CheckCertificate skipped(const std::string& check, const std::string& why) {
    lyap::CheckCertificate c;
    c.check = check;
    c.verdict = lyap::Verdict::inconclusive;
    c.notes.push_back(why);
    return c;
}

template <class State>
State to_state(const std::vector<double>& x) {
    if constexpr (std::is_same_v<State, DiscreteState>) {
        std::vector<Count> c;
        for (double v : x) c.push_back(static_cast<Count>(v));
        return DiscreteState(std::move(c));
    } else {
        return ContinuousState(x);
    }
}

struct RunState {
    const ExperimentSpec& spec;
    const RunOptions& opt;
    std::ostream& out;
    std::uint64_t seed;
    ArtifactWriter writer;
    json wall = json::object();
    std::vector<lyap::CheckCertificate> certs;
    json params = json::object();
    json estimates = json::object();
    std::vector<std::string> failures;

    RunState(const ExperimentSpec& s, const RunOptions& o, std::ostream& os, std::uint64_t sd)
        : spec(s), opt(o), out(os), seed(sd), writer(o.out.value_or(s.output), o.format) {}

    bool checks() const { return opt.command != "estimate" && !spec.checks.empty(); }
    bool estimation() const { return opt.command != "check" && !spec.estimation.methods.empty(); }
};

// ---------------------------------------------------------------------------
// birth-death

void bd_checks(RunState& st, const bd::BDModel& m) {
    const ExperimentSpec& s = st.spec;
    auto t0 = Clock::now();
    std::optional<bd::BDLyapunovParams> params;
    lyap::CheckCertificate assumption;
    double eta = 0.0;
    std::string params_note;
    try {
        if (s.lyapunov.automatic) {
            const auto found = bd::auto_eta(m, s.k_lo, s.k_hi);
            if (found) {
                eta = found->eta;
                assumption = found->certificate;
            } else {
                eta = std::ldexp(1.0, -12);
                assumption = bd::check_assumption_pnm(m, eta, s.k_lo, s.k_hi);
                params_note = "no eta in {2^-1, ..., 2^-12} passes the assumption check";
            }
        } else {
            eta = *s.lyapunov.eta;
            assumption = bd::check_assumption_pnm(m, eta, s.k_lo, s.k_hi);
        }
        if (s.lyapunov.alpha) {
            bd::BDLyapunovParams p{*s.lyapunov.alpha, *s.lyapunov.beta, *s.lyapunov.epsilon, eta};
            p.validate();
            params = p;
        } else if (assumption.holds()) {
            params = bd::select_bd_params(m, eta, s.k_lo, s.k_hi).params;
        } else {
            params_note = "parameters not selected: the assumption check does not hold for eta = " + format_double(eta);
        }
    } catch (const PreconditionError& e) {
        throw SpecError(s.source, line_of(s, "/lyapunov"), std::string("lyapunov parameters rejected: ") + e.what());
    } catch (const NumericalError& e) {
        params_note = std::string("parameter selection failed: ") + e.what();
    }
    st.params = {{"model", "bd"}, {"eta", eta}};
    if (params) st.params["pair"] = params->to_json();
    if (!params_note.empty()) st.params["note"] = params_note;
    st.wall["params"] = since(t0);

    t0 = Clock::now();
    if (s.wants_check("assumption")) st.certs.push_back(assumption);
    const std::string why = params_note.empty() ? "no Lyapunov parameters" : params_note;
    if (s.wants_check("condition_a"))
        st.certs.push_back(params ? bd::check_bd_condition_a(m, *params, s.k_lo, s.k_hi) : skipped("bd_condition_a", why));
    if (s.wants_check("condition_b"))
        st.certs.push_back(params ? bd::check_bd_condition_b(m, *params, s.k_lo, s.k_hi) : skipped("bd_condition_b", why));
    if (s.wants_check("admissible")) {
        if (params) {
            const auto pair = lyap::make_bd_pair(m, *params);
            std::vector<DiscreteState> escape;
            for (Count k = 100; k <= 6400; k *= 2) escape.push_back(DiscreteState(std::vector<Count>(m.dimension(), k)));
            st.certs.push_back(lyap::check_admissible<DiscreteState>(
                pair, escape, [](const DiscreteState& n) { return static_cast<double>(total(n)); }));
        } else {
            st.certs.push_back(skipped("admissible_couple", why));
        }
    }
    if (s.wants_check("nonlinear")) {
        if (params) {
            const auto pair = lyap::make_bd_pair(m, *params);
            std::vector<DiscreteState> pool;
            const std::vector<Count> box = s.estimation.box.empty() ? std::vector<Count>(m.dimension(), 15) : s.estimation.box;
            bd::Truncation tr(m, box);
            for (std::size_t i = 0; i < tr.size(); ++i) pool.push_back(tr.state(i));
            const auto measures = lyap::sample_mixture_measures(pool, 500, RngStream(st.seed, 40));
            auto rep = lyap::check_nonlinear_inequality(pair, measures, params->epsilon);
            rep.certificate.witnesses["A"] = rep.fitted.A;
            rep.certificate.witnesses["B"] = rep.fitted.B;
            st.certs.push_back(rep.certificate);
        } else {
            st.certs.push_back(skipped("nonlinear_inequality", why));
        }
    }
    std::ostringstream sl;
    sl << "k,dbar,dunder\n";
    for (const auto& x : bd::slice_stats_range(m, s.k_lo, s.k_hi))
        sl << x.k << ',' << format_double(x.dbar) << ',' << format_double(x.dunder) << '\n';
    st.writer.table("slice_stats", sl.str());
    st.wall["certificates"] = since(t0);
}

void bd_estimation(RunState& st, const bd::BDModel& m) {
    const ExperimentSpec& s = st.spec;
    const EstimationSpec& e = s.estimation;
    const auto t0 = Clock::now();
    bd::BDSimulator sim(m);
    std::optional<qsd::EigenOracle> oracle;
    std::optional<bd::Truncation> tr;
    EmpiricalMeasure<DiscreteState> reference;
    std::string reference_label;
    double lambda0 = 0.0;
    Interval lambda0_ci{};

    if (e.wants("eigen_oracle")) {
        try {
            oracle = qsd::qsd_eigen_oracle_auto(m, e.box);
            tr.emplace(m, oracle->box);
            reference = qsd::box_measure(*tr, oracle->nu).normalized();
            reference_label = "eigen_oracle";
            lambda0 = oracle->lambda0;
            lambda0_ci = {lambda0, lambda0};
            st.estimates["eigen_oracle"] = oracle->to_json();
            st.writer.table("qsd_eigen_oracle", measure_csv(reference));
            st.out << "estimate eigen_oracle: lambda0 = " << format_double(oracle->lambda0) << " on box " << box_text(oracle->box)
                   << ", residual "
                   << oracle->residual << '\n';
        } catch (const NumericalError& x) {
            st.failures.push_back(std::string("eigen_oracle: ") + x.what());
        }
    }
    if (e.wants("fleming_viot")) {
        try {
            const auto est = qsd::fleming_viot(sim, EmpiricalMeasure<DiscreteState>::dirac(
                                                        DiscreteState(std::vector<Count>(m.dimension(), 1))),
                                               *e.fleming_viot, RngStream(st.seed, 10));
            json j = est.summary();
            if (oracle) j["tv_to_oracle"] = tv_distance(est.measure, reference);
            st.estimates["fleming_viot"] = j;
            st.writer.table("qsd_fleming_viot", measure_csv(est.measure));
            if (!oracle) {
                reference = est.measure;
                reference_label = "fleming_viot";
                lambda0 = est.lambda0;
                lambda0_ci = est.lambda0_ci;
            }
            st.out << "estimate fleming_viot: lambda0 = " << format_double(est.lambda0)
                   << (oracle ? ", TV to oracle = " + format_double(j["tv_to_oracle"].get<double>()) : std::string())
                   << '\n';
        } catch (const NumericalError& x) {
            st.failures.push_back(std::string("fleming_viot: ") + x.what());
        }
    }
    if (e.wants("conditioned_mc")) {
        const auto& mc = *e.conditioned_mc;
        std::vector<qsd::ConditionedLaws<DiscreteState>> laws;
        for (std::size_t i = 0; i < mc.starts.size(); ++i)
            laws.push_back(qsd::conditioned_mc(sim, EmpiricalMeasure<DiscreteState>::dirac(to_state<DiscreteState>(mc.starts[i])),
                                               mc.grid, mc.n_traj, RngStream(st.seed, 20 + i)));
        json curves = json::array();
        for (std::size_t i = 0; i < laws.size(); ++i) {
            qsd::ConvergenceReport rep;
            if (!reference.empty()) {
                rep = qsd::convergence_to_measure(laws[i], reference, 0, reference_label);
            } else {
                const std::size_t other = i + 1 < laws.size() ? i + 1 : 0;
                rep = qsd::convergence_between(laws[i], laws[other], "start_" + std::to_string(other + 1));
            }
            json j = rep.summary();
            j["start"] = mc.starts[i];
            curves.push_back(j);
            st.writer.table("tv_" + std::to_string(i + 1), report_csv(rep));
            st.out << "estimate conditioned_mc start " << i + 1 << ": rate "
                   << (rep.fit ? format_double(rep.fit->rate) : "n/a (" + rep.fit_error + ")") << '\n';
            if (!rep.fit) st.failures.push_back("conditioned_mc start " + std::to_string(i + 1) + ": " + rep.fit_error);
        }
        st.estimates["conditioned_mc"] = curves;
    }
    if (e.wants("eta_profile")) {
        const auto& es = *e.eta_profile;
        std::vector<DiscreteState> states;
        for (const auto& x : es.states) states.push_back(to_state<DiscreteState>(x));
        if (reference_label.empty()) {
            st.failures.push_back("eta_profile: no lambda0 estimate available");
        } else {
            const auto rows = qsd::eta_profile(sim, states, es.grid, es.n_traj, lambda0, lambda0_ci, RngStream(st.seed, 30));
            st.writer.table("eta_profile", eta_csv(rows));
            st.estimates["eta_profile"] = {{"lambda0_source", reference_label},
                                           {"rows", eta_json(rows, oracle ? &oracle->eta : nullptr, tr ? &*tr : nullptr)}};
        }
    }
    st.wall["estimation"] = since(t0);
}

// ---------------------------------------------------------------------------
// Feller

void feller_checks(RunState& st, const feller::FellerModel& m, const FellerSpec& f) {
    const ExperimentSpec& s = st.spec;
    auto t0 = Clock::now();
    std::optional<feller::FellerSetup> setup;
    try {
        setup = s.lyapunov.automatic ? feller::auto_feller_setup(m) : feller::auto_feller_setup(m, *s.lyapunov.eta);
    } catch (const PreconditionError& e) {
        throw SpecError(s.source, line_of(s, "/lyapunov"), std::string("lyapunov parameters rejected: ") + e.what());
    }
    st.params = {{"model", "feller"}, {"setup", setup->to_json()}};
    st.wall["params"] = since(t0);

    t0 = Clock::now();
    const auto grid = feller::default_grid(setup->params, m.dimension());
    if (s.wants_check("assumption")) st.certs.push_back(feller::check_feller_assumption(m, setup->params, grid));
    if (s.wants_check("condition_a") || s.wants_check("condition_b")) {
        const auto rep = feller::check_feller_condition_report(setup->pair, setup->params, setup->epsilon, grid);
        if (s.wants_check("condition_a")) st.certs.push_back(rep.condition_a);
        if (s.wants_check("condition_b")) st.certs.push_back(rep.condition_b);
    }
    if (s.wants_check("admissible")) {
        const auto pair = lyap::make_feller_pair(setup->pair);
        std::vector<ContinuousState> escape;
        for (int j = 0; j < 12; ++j) {
            std::vector<double> x(m.dimension(), 1.0);
            x[0] = 0.5 * std::pow(0.5, j);
            escape.push_back(ContinuousState(x));
        }
        st.certs.push_back(lyap::check_admissible<ContinuousState>(pair, escape, [&](const ContinuousState& x) {
            return static_cast<double>(lyap::feller_exhaustion_index(m, x));
        }));
    }
    if (s.wants_check("comparison")) {
        const auto rep = feller::compare_with_upper_diffusions(m, setup->params.a, setup->params.eta,
                                                               ContinuousState(std::vector<double>(m.dimension(), 1.0)),
                                                               5.0, f.scheme, 1000, RngStream(st.seed, 41));
        lyap::CheckCertificate c;
        c.check = "pathwise_comparison";
        c.qualifier = "empirical";
        c.seed = st.seed;
        c.domain = "1000 coupled paths from (1, ..., 1) over [0, 5]";
        c.witnesses = {{"steps_checked", static_cast<double>(rep.steps_checked)},
                       {"upper_violations", static_cast<double>(rep.upper_violations)},
                       {"logistic_violations", static_cast<double>(rep.logistic_violations)},
                       {"worst_upper_excess", rep.worst_upper_excess},
                       {"worst_logistic_excess", rep.worst_logistic_excess}};
        c.verdict = rep.upper_violations + rep.logistic_violations == 0 ? lyap::Verdict::holds : lyap::Verdict::violated;
        if (!c.holds())
            c.counterexamples.push_back({"a coupled path crossed its comparison diffusion", {},
                                         {{"upper_violations", static_cast<double>(rep.upper_violations)},
                                          {"logistic_violations", static_cast<double>(rep.logistic_violations)}}});
        st.certs.push_back(c);
    }
    st.wall["certificates"] = since(t0);
}

void feller_estimation(RunState& st, const feller::FellerModel& m, const FellerSpec& f) {
    const EstimationSpec& e = st.spec.estimation;
    const auto t0 = Clock::now();
    feller::FellerSimulator sim(m, f.scheme);
    std::optional<qsd::QSDEstimate<ContinuousState>> fv;
    if (e.wants("fleming_viot")) {
        try {
            fv = qsd::fleming_viot(sim, EmpiricalMeasure<ContinuousState>::dirac(
                                            ContinuousState(std::vector<double>(m.dimension(), 1.0))),
                                   *e.fleming_viot, RngStream(st.seed, 10));
            st.out << "estimate fleming_viot: lambda0 = " << format_double(fv->lambda0) << '\n';
        } catch (const NumericalError& x) {
            st.failures.push_back(std::string("fleming_viot: ") + x.what());
        }
    }
    std::vector<qsd::ConditionedLaws<ContinuousState>> laws;
    if (e.wants("conditioned_mc")) {
        const auto& mc = *e.conditioned_mc;
        for (std::size_t i = 0; i < mc.starts.size(); ++i)
            laws.push_back(qsd::conditioned_mc(sim, EmpiricalMeasure<ContinuousState>::dirac(ContinuousState(mc.starts[i])),
                                               mc.grid, mc.n_traj, RngStream(st.seed, 20 + i)));
    }
    std::vector<const EmpiricalMeasure<ContinuousState>*> pool;
    if (fv) pool.push_back(&fv->measure);
    for (const auto& l : laws)
        if (l.resolved > 0) pool.push_back(&l.laws[l.resolved - 1]);
    std::optional<BinGrid> bins;
    if (!pool.empty()) bins = BinGrid::from_quantiles(pool, e.bins_per_axis);
    std::optional<BinnedMeasure> ref;
    if (fv) {
        ref = bin(fv->measure, *bins);
        json j = fv->summary();
        j["bins"] = {{"lo", bins->lo}, {"hi", bins->hi}, {"bins", bins->bins}};
        st.estimates["fleming_viot"] = j;
        st.writer.table("qsd_fleming_viot", measure_csv(ref->cells));
    }
    if (!laws.empty()) {
        json curves = json::array();
        std::vector<qsd::ConditionedLaws<DiscreteState>> binned;
        for (const auto& l : laws) binned.push_back(qsd::bin_laws(l, *bins));
        for (std::size_t i = 0; i < binned.size(); ++i) {
            const std::size_t other = i + 1 < binned.size() ? i + 1 : 0;
            const auto rep = ref ? qsd::convergence_to_measure(binned[i], ref->cells, 0, "fleming_viot")
                                 : qsd::convergence_between(binned[i], binned[other], "start_" + std::to_string(other + 1));
            json j = rep.summary();
            j["start"] = e.conditioned_mc->starts[i];
            curves.push_back(j);
            st.writer.table("tv_" + std::to_string(i + 1), report_csv(rep));
            st.out << "estimate conditioned_mc start " << i + 1 << ": rate "
                   << (rep.fit ? format_double(rep.fit->rate) : "n/a (" + rep.fit_error + ")") << '\n';
            if (!rep.fit) st.failures.push_back("conditioned_mc start " + std::to_string(i + 1) + ": " + rep.fit_error);
        }
        st.estimates["conditioned_mc"] = curves;
    }
    if (e.wants("eta_profile")) {
        if (!fv) {
            st.failures.push_back("eta_profile: no lambda0 estimate available");
        } else {
            std::vector<ContinuousState> states;
            for (const auto& x : e.eta_profile->states) states.push_back(ContinuousState(x));
            const auto rows = qsd::eta_profile(sim, states, e.eta_profile->grid, e.eta_profile->n_traj, fv->lambda0,
                                               fv->lambda0_ci, RngStream(st.seed, 30));
            st.writer.table("eta_profile", eta_csv(rows));
            st.estimates["eta_profile"] = {{"lambda0_source", "fleming_viot"},
                                           {"rows", eta_json<ContinuousState>(rows, nullptr, nullptr)}};
        }
    }
    st.wall["estimation"] = since(t0);
}

} // namespace

int run_experiment(const ExperimentSpec& spec, const RunOptions& opt, std::ostream& out, std::ostream& err) {
    const auto start = Clock::now();
    const std::string started = utc_now();
    RunState st(spec, opt, out, opt.seed.value_or(spec.seed));
    std::optional<bd::BDModel> bdm;
    std::optional<feller::FellerModel> fm;
    if (spec.bd)
        bdm = bd::BDModel::lotka_volterra(*spec.bd);
    else
        fm = feller::FellerModel::lotka_volterra(spec.feller->gamma, spec.feller->lv);

    if (st.checks()) {
        if (bdm)
            bd_checks(st, *bdm);
        else
            feller_checks(st, *fm, *spec.feller);
        st.writer.document("params.json", st.params);
        json certs = json::array();
        for (const auto& c : st.certs) {
            certs.push_back(c.to_json());
            out << verdict_line(c) << '\n';
        }
        st.writer.document("certificates.json", certs);
    }
    if (st.estimation()) {
        if (bdm)
            bd_estimation(st, *bdm);
        else
            feller_estimation(st, *fm, *spec.feller);
        if (!st.failures.empty()) st.estimates["failures"] = st.failures;
        st.writer.document("estimates.json", st.estimates);
    }

    int code = kExitOk;
    std::vector<const lyap::CheckCertificate*> bad;
    for (const auto& c : st.certs)
        if (!c.holds()) bad.push_back(&c);
    if (!bad.empty()) {
        json ce = json::array();
        for (const auto* c : bad) ce.push_back(c->to_json());
        st.writer.document("counterexamples.json", ce);
        for (const auto* c : bad)
            err << "certificate " << c->check << " " << lyap::to_string(c->verdict) << "; see "
                << (st.writer.dir() / "counterexamples.json").string() << '\n';
        code = kExitFailed;
    }
    for (const auto& f : st.failures) {
        err << "estimation failed: " << f << '\n';
        code = kExitFailed;
    }
    st.wall["total"] = since(start);
    st.writer.manifest({{"schema", kSpecSchema},
                        {"command", opt.command},
                        {"spec", spec.source},
                        {"spec_fnv1a64", fnv1a_hex(spec.text)},
                        {"seed", st.seed},
                        {"format", opt.format},
                        {"threads", max_threads()},
                        {"started", started},
                        {"wall_times", st.wall},
                        {"versions", versions()},
                        {"exit_code", code}});
    out << st.writer.count() << " artifacts written to " << st.writer.dir().string() << '\n';
    return code;
}

int run_oracle(const ExperimentSpec& spec, const RunOptions& opt, std::ostream& out, std::ostream& err) {
    if (!spec.bd) throw SpecError(spec.source, line_of(spec, "/model/type"), "oracle needs a birth-death model");
    if (spec.estimation.box.empty()) throw SpecError(spec.source, line_of(spec, "/estimation"), "oracle needs /estimation/box (list eigen_oracle)");
    const auto m = bd::BDModel::lotka_volterra(*spec.bd);
    bd::Truncation tr(m, spec.estimation.box);
    try {
        const auto o = qsd::qsd_eigen_oracle(tr);
        const auto nu = qsd::box_measure(tr, o.nu).normalized();
        if (nu.size() == 1)
            out << "qsd: delta at " << to_string(nu.atoms().front().state) << '\n';
        out << "lambda0: " << format_double(o.lambda0) << '\n';
        if (tr.size() == 1) out << "exit rate q: " << format_double(m.total_rate(tr.state(0))) << '\n';
        out << "residual: " << o.residual << "\niterations: " << o.iterations << '\n';
        if (opt.out) {
            ArtifactWriter w(*opt.out, opt.format);
            w.table("qsd_eigen_oracle", measure_csv(nu));
            w.document("oracle.json", o.to_json());
            w.manifest({{"schema", kSpecSchema}, {"command", "oracle"}, {"spec", spec.source},
                        {"spec_fnv1a64", fnv1a_hex(spec.text)}, {"started", utc_now()}, {"versions", versions()}});
        } else {
            out << measure_csv(nu);
        }
    } catch (const NumericalError& e) {
        err << "oracle failed: " << e.what() << '\n';
        return kExitFailed;
    }
    return kExitOk;
}

int run_reproduce(int thm, const RunOptions& opt, std::ostream& out, std::ostream&) {
    PipelineOptions p;
    if (opt.seed) p.seed = *opt.seed;
    const auto results = thm == 32 ? reproduce_thm_3_2(p) : reproduce_thm_4_2(p);
    print_table(out, results);
    bool pass = true;
    for (const auto& r : results) pass = pass && r.pass;
    if (opt.out) {
        ArtifactWriter w(*opt.out, opt.format);
        json summary = json::array();
        for (const auto& r : results) {
            for (const auto& a : r.artifacts) w.table(a.name.substr(0, a.name.rfind('.')), a.body);
            summary.push_back({{"criterion", r.id}, {"title", r.title}, {"pass", r.pass}, {"detail", r.detail},
                               {"seconds", r.seconds}, {"metrics", r.metrics}});
        }
        w.document("results.json", summary);
        w.manifest({{"command", thm == 32 ? "reproduce-thm-3-2" : "reproduce-thm-4-2"}, {"seed", p.seed},
                    {"started", utc_now()}, {"versions", versions()}, {"exit_code", pass ? 0 : 1}});
    }
    return pass ? kExitOk : kExitFailed;
}

} // namespace qsdlab::cli
